use nalgebra::{Matrix3, Rotation3, UnitQuaternion};

/// The 24 proper rotations of the cube: signed permutation matrices with
/// determinant +1. The identity comes first.
pub fn octahedral_rotations() -> Vec<UnitQuaternion<f64>> {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(24);
    for perm in PERMS {
        for signs in 0..8u32 {
            let mut m = Matrix3::zeros();
            for (row, &col) in perm.iter().enumerate() {
                m[(row, col)] = if signs & (1 << row) == 0 { 1.0 } else { -1.0 };
            }
            if m.determinant() > 0.0 {
                out.push(UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pose::rotation_angle_between;
    use nalgebra::Vector3;

    #[test]
    fn has_24_distinct_members_starting_with_identity() {
        let rs = octahedral_rotations();
        assert_eq!(rs.len(), 24);
        assert!(rotation_angle_between(&rs[0], &UnitQuaternion::identity()) < 1e-12);
        for i in 0..24 {
            for j in (i + 1)..24 {
                assert!(rotation_angle_between(&rs[i], &rs[j]) > 1e-3);
            }
        }
    }

    #[test]
    fn closed_under_composition() {
        let rs = octahedral_rotations();
        for a in &rs {
            for b in &rs {
                let c = a * b;
                let nearest = rs.iter().map(|r| rotation_angle_between(r, &c)).fold(f64::INFINITY, f64::min);
                assert!(nearest < 1e-6);
            }
        }
    }

    #[test]
    fn maps_cube_vertices_onto_themselves() {
        let corners: Vec<Vector3<f64>> = (0..8)
            .map(|i| {
                Vector3::new(
                    if i & 1 == 0 { -1.0 } else { 1.0 },
                    if i & 2 == 0 { -1.0 } else { 1.0 },
                    if i & 4 == 0 { -1.0 } else { 1.0 },
                )
            })
            .collect();
        for r in octahedral_rotations() {
            for c in &corners {
                let m = r * c;
                assert!(corners.iter().any(|k| (k - m).norm() < 1e-9));
            }
        }
    }
}
