use super::{TriMesh, Vec3, DEGENERATE_AREA};

#[derive(Debug, Clone)]
pub struct FaceNormals {
    /// Unit normals; zero for degenerate faces.
    pub normals: Vec<Vec3>,
    pub degenerate: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct VertexNormals {
    pub normals: Vec<Vec3>,
    /// Set for vertices with no incident area; their normal is +z.
    pub fallback: Vec<bool>,
}

/// Counter-clockwise winding is outward.
pub fn face_normals(mesh: &TriMesh) -> FaceNormals {
    let mut normals = Vec::with_capacity(mesh.face_count());
    let mut degenerate = Vec::with_capacity(mesh.face_count());
    for f in 0..mesh.face_count() {
        let [a, b, c] = mesh.corners(f);
        let n = (b - a).cross(&(c - a));
        let area = 0.5 * n.norm();
        if area < DEGENERATE_AREA {
            normals.push(Vec3::zeros());
            degenerate.push(true);
        } else {
            normals.push(n / (2.0 * area));
            degenerate.push(false);
        }
    }
    FaceNormals { normals, degenerate }
}

/// Area-weighted average of incident face normals.
pub fn vertex_normals(mesh: &TriMesh) -> VertexNormals {
    let mut acc = vec![Vec3::zeros(); mesh.vertex_count()];
    for (f, face) in mesh.faces().iter().enumerate() {
        let [a, b, c] = mesh.corners(f);
        // |cross| = 2 * area, so the raw cross product is already area-weighted.
        let n = (b - a).cross(&(c - a));
        for &v in face {
            acc[v as usize] += n;
        }
    }
    let mut fallback = vec![false; acc.len()];
    let normals = acc
        .into_iter()
        .enumerate()
        .map(|(v, n)| {
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                n / len
            } else {
                fallback[v] = true;
                Vec3::z()
            }
        })
        .collect();
    VertexNormals { normals, fallback }
}
