//! Plain-text output formats: field dumps and CSV tables.

use crate::grid::SolutionField;
use std::io::{self, Write};

/// Writes a field as rows of "x_center value" (plus a third std column when
/// given), preceded by '#'-prefixed header lines with the grid metadata,
/// time stamp and any provenance lines.
pub fn write_field(
    w: &mut dyn Write,
    field: &SolutionField,
    std: Option<&SolutionField>,
    provenance: &[String],
) -> io::Result<()> {
    if let Some(s) = std {
        assert_eq!(s.values.len(), field.values.len());
    }
    writeln!(
        w,
        "# x_min={} x_max={} n_cells={} dx={} time={}",
        field.grid.x_min(),
        field.grid.x_max(),
        field.grid.n_cells(),
        field.grid.dx(),
        field.time
    )?;
    for line in provenance {
        for part in line.lines().filter(|l| !l.is_empty()) {
            writeln!(w, "# {part}")?;
        }
    }
    for j in 0..field.values.len() {
        match std {
            Some(s) => writeln!(
                w,
                "{} {} {}",
                field.grid.cell_center(j),
                field.values[j],
                s.values[j]
            )?,
            None => writeln!(w, "{} {}", field.grid.cell_center(j), field.values[j])?,
        }
    }
    Ok(())
}

/// [`write_field`] into a string.
pub fn field_to_string(
    field: &SolutionField,
    std: Option<&SolutionField>,
    provenance: &[String],
) -> String {
    let mut buf = Vec::new();
    write_field(&mut buf, field, std, provenance).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("field dump is ASCII")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn dump_has_header_and_one_row_per_cell() {
        let g = GridSpec::new(0.0, 1.0, 4).unwrap();
        let f = SolutionField::new(g, vec![0.1, 0.2, 0.3, 0.4], 0.5);
        let s = field_to_string(&f, None, &["seed=7".into()]);
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[0].starts_with("# x_min=0 x_max=1 n_cells=4"));
        assert_eq!(lines[1], "# seed=7");
        assert_eq!(lines.len(), 2 + 4);
        assert_eq!(lines[2], "0.125 0.1");

        let std = SolutionField::new(g, vec![0.0; 4], 0.5);
        let s3 = field_to_string(&f, Some(&std), &[]);
        assert!(s3.lines().last().unwrap().split(' ').count() == 3);
    }
}
