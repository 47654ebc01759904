//! Plain-text writers for meshes, trajectories and tables.

use std::fmt::Write as _;

use crate::functionals::SurfaceMap;

/// Wavefront OBJ text: one `v` line per mesh vertex, one `f` line per triangle.
pub fn obj_string(u: &SurfaceMap) -> String {
    let mut s = String::new();
    for v in u.values() {
        writeln!(s, "v {:.17e} {:.17e} {:.17e}", v.x, v.y, v.z).unwrap();
    }
    for t in u.mesh().triangles() {
        writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    s
}

/// CSV text with a header line; values printed with round-trip precision.
pub fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_icosphere;
    use std::sync::Arc;

    #[test]
    fn obj_line_counts() {
        let m = Arc::new(build_icosphere(1).unwrap());
        let text = obj_string(&SurfaceMap::identity(m));
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 42);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 80);
    }

    #[test]
    fn csv_round_trips_floats() {
        let text = csv_string(&["a", "b"], vec![vec![0.1, -3.0e-300]]);
        let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(row, vec![0.1, -3.0e-300]);
    }
}
