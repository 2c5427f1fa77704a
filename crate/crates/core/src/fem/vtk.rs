//! Legacy ASCII VTK export for meshes and nodal fields.

use std::io::{self, Write};
use std::path::Path;

use super::mesh::TetMesh;
use super::system::DiscreteField;

/// Writes the mesh, its element conductivities and fractions, and any nodal
/// fields to a legacy ASCII VTK file readable by standard viewers.
pub fn write_vtk(
    mesh: &TetMesh,
    fields: &[(&str, &DiscreteField)],
    path: &Path,
) -> io::Result<()> {
    let mut out = io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "conductivity mesh")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;

    writeln!(out, "POINTS {} double", mesh.nodes().len())?;
    for p in mesh.nodes() {
        writeln!(out, "{:.12e} {:.12e} {:.12e}", p.x, p.y, p.z)?;
    }

    let m = mesh.tets().len();
    writeln!(out, "CELLS {m} {}", 5 * m)?;
    for t in mesh.tets() {
        writeln!(out, "4 {} {} {} {}", t[0], t[1], t[2], t[3])?;
    }
    writeln!(out, "CELL_TYPES {m}")?;
    for _ in 0..m {
        writeln!(out, "10")?;
    }

    writeln!(out, "CELL_DATA {m}")?;
    writeln!(out, "SCALARS conductivity double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for c in mesh.conductivity() {
        writeln!(out, "{:.12e}", c.scalar())?;
    }
    writeln!(out, "SCALARS inclusion_fraction double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for f in mesh.fractions() {
        writeln!(out, "{:.12e}", f)?;
    }

    if !fields.is_empty() {
        writeln!(out, "POINT_DATA {}", mesh.nodes().len())?;
        for (name, field) in fields {
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for v in &field.values {
                writeln!(out, "{:.12e}", v)?;
            }
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{mesh_domain, DomainSpec, FieldRole, InterfaceModel};

    #[test]
    fn export_writes_a_complete_legacy_file() {
        let mesh = mesh_domain(
            &DomainSpec::unit_box_top_face(),
            &[],
            0.5,
            2.0,
            InterfaceModel::Fraction,
        )
        .unwrap();
        let field = DiscreteField {
            values: mesh.nodes().iter().map(|p| p.x).collect(),
            role: FieldRole::Solution,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.vtk");
        write_vtk(&mesh, &[("potential", &field)], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0"));
        assert!(text.contains("DATASET UNSTRUCTURED_GRID"));
        assert!(text.contains(&format!("POINTS {} double", mesh.nodes().len())));
        assert!(text.contains("SCALARS conductivity double 1"));
        assert!(text.contains("SCALARS potential double 1"));
        let cell_lines = text
            .lines()
            .filter(|l| l.starts_with("4 "))
            .count();
        assert_eq!(cell_lines, mesh.tets().len());
    }
}
