use super::{TriMesh, Vec3};

/// Uniform graph Laplacian: mean of the 1-ring minus the value itself,
/// summed as differences so that constant fields give exactly zero.
/// `values` holds `width` reals per vertex. Vertices without neighbours map
/// to zero.
pub fn uniform_laplacian(mesh: &TriMesh, values: &[f64], width: usize) -> Vec<f64> {
    assert_eq!(values.len(), mesh.vertex_count() * width, "values/vertex count mismatch");
    let rings = mesh.vertex_neighbors();
    let mut out = vec![0.0; values.len()];
    for (v, ring) in rings.iter().enumerate() {
        if ring.is_empty() {
            continue;
        }
        let inv = 1.0 / ring.len() as f64;
        for k in 0..width {
            let x = values[v * width + k];
            out[v * width + k] = ring.iter().map(|&u| values[u as usize * width + k] - x).sum::<f64>() * inv;
        }
    }
    out
}

pub fn uniform_laplacian_vec3(mesh: &TriMesh, values: &[Vec3]) -> Vec<Vec3> {
    let flat: Vec<f64> = values.iter().flat_map(|v| v.iter().copied()).collect();
    uniform_laplacian(mesh, &flat, 3)
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0], c[1], c[2]))
        .collect()
}
