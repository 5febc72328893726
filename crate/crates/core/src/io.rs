//! Field persistence: CSV with a self-describing header, full round-trip
//! precision (17 significant digits), bit-identical on import.
//!
//! Layout: `# shape=<token> h=<v> nx=<n> ny=<n> components=<N>` followed by
//! one comma-separated row per lattice row. Multi-component fields write one
//! block per component, each introduced by `# component=<l>`.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::{build_grid, DomainShape, GridDomain};

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn shape_token(shape: &DomainShape) -> String {
    match shape {
        DomainShape::Interval { a, b } => format!("interval({},{})", fmt_f64(*a), fmt_f64(*b)),
        DomainShape::Rectangle { corner, widths } => format!(
            "rectangle({},{};{},{})",
            fmt_f64(corner[0]),
            fmt_f64(corner[1]),
            fmt_f64(widths[0]),
            fmt_f64(widths[1])
        ),
        DomainShape::Disk { center, radius } => format!(
            "disk({},{};{})",
            fmt_f64(center[0]),
            fmt_f64(center[1]),
            fmt_f64(*radius)
        ),
        DomainShape::Polygon { vertices } => {
            let parts: Vec<String> = vertices
                .iter()
                .map(|v| format!("{},{}", fmt_f64(v[0]), fmt_f64(v[1])))
                .collect();
            format!("polygon({})", parts.join(";"))
        }
    }
}

fn parse_f64(s: &str, context: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::MalformedField(format!("bad number `{s}` in {context}")))
}

fn parse_shape_token(token: &str) -> Result<DomainShape> {
    let open = token
        .find('(')
        .ok_or_else(|| Error::MalformedField(format!("bad shape token `{token}`")))?;
    if !token.ends_with(')') {
        return Err(Error::MalformedField(format!("bad shape token `{token}`")));
    }
    let name = &token[..open];
    let args = &token[open + 1..token.len() - 1];
    match name {
        "interval" => {
            let parts: Vec<&str> = args.split(',').collect();
            if parts.len() != 2 {
                return Err(Error::MalformedField("interval needs 2 numbers".into()));
            }
            Ok(DomainShape::Interval {
                a: parse_f64(parts[0], "interval")?,
                b: parse_f64(parts[1], "interval")?,
            })
        }
        "rectangle" => {
            let groups: Vec<&str> = args.split(';').collect();
            if groups.len() != 2 {
                return Err(Error::MalformedField("rectangle needs corner;widths".into()));
            }
            let c: Vec<&str> = groups[0].split(',').collect();
            let w: Vec<&str> = groups[1].split(',').collect();
            if c.len() != 2 || w.len() != 2 {
                return Err(Error::MalformedField("rectangle needs 2+2 numbers".into()));
            }
            Ok(DomainShape::Rectangle {
                corner: [parse_f64(c[0], "rectangle")?, parse_f64(c[1], "rectangle")?],
                widths: [parse_f64(w[0], "rectangle")?, parse_f64(w[1], "rectangle")?],
            })
        }
        "disk" => {
            let groups: Vec<&str> = args.split(';').collect();
            if groups.len() != 2 {
                return Err(Error::MalformedField("disk needs center;radius".into()));
            }
            let c: Vec<&str> = groups[0].split(',').collect();
            if c.len() != 2 {
                return Err(Error::MalformedField("disk center needs 2 numbers".into()));
            }
            Ok(DomainShape::Disk {
                center: [parse_f64(c[0], "disk")?, parse_f64(c[1], "disk")?],
                radius: parse_f64(groups[1], "disk")?,
            })
        }
        "polygon" => {
            let mut vertices = Vec::new();
            for group in args.split(';') {
                let c: Vec<&str> = group.split(',').collect();
                if c.len() != 2 {
                    return Err(Error::MalformedField("polygon vertex needs 2 numbers".into()));
                }
                vertices.push([parse_f64(c[0], "polygon")?, parse_f64(c[1], "polygon")?]);
            }
            Ok(DomainShape::Polygon { vertices })
        }
        other => Err(Error::MalformedField(format!("unknown shape `{other}`"))),
    }
}

/// Renders the field file as a string; used by export and by the determinism
/// tests.
pub fn render_field(grid: &GridDomain, components: usize, values: &[f64]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# shape={} h={} nx={} ny={} components={}",
        shape_token(&grid.shape),
        fmt_f64(grid.h),
        grid.nx,
        grid.ny,
        components
    );
    for l in 0..components {
        if components > 1 {
            let _ = writeln!(out, "# component={l}");
        }
        for j in 0..grid.ny {
            let row: Vec<String> = (0..grid.nx)
                .map(|i| fmt_f64(values[(j * grid.nx + i) * components + l]))
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
    }
    out
}

pub fn export_scalar_field(field: &ScalarField, path: &Path) -> Result<()> {
    std::fs::write(path, render_field(&field.grid, 1, &field.values))?;
    Ok(())
}

pub fn export_vector_field(field: &VectorField, path: &Path) -> Result<()> {
    std::fs::write(path, render_field(&field.grid, field.components, &field.values))?;
    Ok(())
}

/// A field read back from disk, with its grid rebuilt from the header.
pub enum ImportedField {
    Scalar(ScalarField),
    Vector(VectorField),
}

pub fn import_field(path: &Path) -> Result<ImportedField> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::MalformedField("empty file".into()))?;
    if !header.starts_with("# ") {
        return Err(Error::MalformedField("missing header line".into()));
    }
    let mut shape = None;
    let mut h = None;
    let mut nx = None;
    let mut ny = None;
    let mut components = None;
    for part in header[2..].split_whitespace() {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::MalformedField(format!("bad header item `{part}`")))?;
        match key {
            "shape" => shape = Some(parse_shape_token(value)?),
            "h" => h = Some(parse_f64(value, "header h")?),
            "nx" => nx = value.parse::<usize>().ok(),
            "ny" => ny = value.parse::<usize>().ok(),
            "components" => components = value.parse::<usize>().ok(),
            other => return Err(Error::MalformedField(format!("unknown header key `{other}`"))),
        }
    }
    let shape = shape.ok_or_else(|| Error::MalformedField("header missing shape".into()))?;
    let h = h.ok_or_else(|| Error::MalformedField("header missing h".into()))?;
    let nx = nx.ok_or_else(|| Error::MalformedField("header missing nx".into()))?;
    let ny = ny.ok_or_else(|| Error::MalformedField("header missing ny".into()))?;
    let components =
        components.ok_or_else(|| Error::MalformedField("header missing components".into()))?;

    let grid = Arc::new(build_grid(shape, h)?);
    if grid.nx != nx || grid.ny != ny {
        return Err(Error::DimensionMismatch { expected: grid.nx * grid.ny, got: nx * ny });
    }

    let mut values = vec![0.0; nx * ny * components];
    for l in 0..components {
        if components > 1 {
            let marker = lines
                .next()
                .ok_or_else(|| Error::MalformedField("missing component marker".into()))?;
            if marker.trim() != format!("# component={l}") {
                return Err(Error::MalformedField(format!(
                    "expected `# component={l}`, got `{marker}`"
                )));
            }
        }
        for j in 0..ny {
            let line = lines
                .next()
                .ok_or_else(|| Error::MalformedField(format!("missing row {j}")))?;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != nx {
                return Err(Error::DimensionMismatch { expected: nx, got: cells.len() });
            }
            for (i, cell) in cells.iter().enumerate() {
                values[(j * nx + i) * components + l] = parse_f64(cell, "data row")?;
            }
        }
    }

    if components == 1 {
        Ok(ImportedField::Scalar(ScalarField { grid, values }))
    } else {
        Ok(ImportedField::Vector(VectorField { grid, components, values }))
    }
}
