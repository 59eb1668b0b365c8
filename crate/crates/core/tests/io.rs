//! Point cloud and mesh file round trips.

use std::fs;

use nkrr_core::cloud::PointCloud;
use nkrr_core::io::{read_mesh, read_point_cloud, write_mesh, write_ply_cloud, write_xyz};
use nkrr_core::shapes::torus_mesh;
use nkrr_core::{Error, TriMesh};

#[test]
fn xyz_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.xyz");
    let pts = vec![[0.1, -2.0 / 3.0, 1e-300], [std::f64::consts::PI, 0.0, -7.25]];
    write_xyz(&path, &pts).unwrap();
    assert_eq!(read_point_cloud(&path).unwrap().points(), pts.as_slice());
}

#[test]
fn xyz_variants() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    fs::write(&path, "# header\n1 2 3 0 0 1\n\n4,5,6,0,1,0\n").unwrap();
    let c = read_point_cloud(&path).unwrap();
    assert_eq!(c.points(), &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    assert_eq!(c.normals().unwrap(), &[[0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]);
    fs::write(&path, "1 2\n").unwrap();
    assert!(matches!(read_point_cloud(&path), Err(Error::Format(_))));
    fs::write(&path, "1 2 x\n").unwrap();
    assert!(matches!(read_point_cloud(&path), Err(Error::Format(_))));
    assert!(matches!(read_point_cloud(&dir.path().join("missing.xyz")), Err(Error::Io(_))));
}

#[test]
fn ply_cloud_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ply");
    let cloud = PointCloud::with_normals(vec![[0.5, -0.25, 1.0], [2.0, 3.0, 4.0]], vec![[1.0, 0.0, 0.0], [0.0, 0.0, -1.0]]).unwrap();
    write_ply_cloud(&path, &cloud).unwrap();
    assert_eq!(read_point_cloud(&path).unwrap(), cloud);
}

#[test]
fn ascii_and_big_endian_ply() {
    let dir = tempfile::tempdir().unwrap();
    let ascii = dir.path().join("a.ply");
    fs::write(
        &ascii,
        "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 4\nproperty double x\nproperty double y\n\
         property double z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n\
         0 0 0 255\n1 0 0 0\n1 1 0 0\n0 1 0 7\n4 0 1 2 3\n",
    )
    .unwrap();
    let quad = read_mesh(&ascii).unwrap();
    assert_eq!(quad.triangles(), &[[0, 1, 2], [0, 2, 3]]);
    assert_eq!(read_point_cloud(&ascii).unwrap().len(), 4);

    let be = dir.path().join("b.ply");
    let mut bytes = b"ply\nformat binary_big_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n".to_vec();
    for v in [1.5f32, -2.0, 0.25, 3.0, 4.0, 5.0] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(&be, &bytes).unwrap();
    assert_eq!(read_point_cloud(&be).unwrap().points(), &[[1.5, -2.0, 0.25], [3.0, 4.0, 5.0]]);
    bytes.truncate(bytes.len() - 2);
    fs::write(&be, &bytes).unwrap();
    assert!(read_point_cloud(&be).is_err());
}

#[test]
fn mesh_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = torus_mesh(&[0.1, 0.2, 0.3], 0.35, 0.15, 12, 8);
    let obj = dir.path().join("m.obj");
    write_mesh(&obj, &mesh).unwrap();
    assert_eq!(read_mesh(&obj).unwrap(), mesh);

    let ply = dir.path().join("m.ply");
    write_mesh(&ply, &mesh).unwrap();
    let back = read_mesh(&ply).unwrap();
    assert_eq!(back.triangles(), mesh.triangles());
    for (a, b) in back.vertices().iter().zip(mesh.vertices()) {
        assert!((0..3).all(|k| (a[k] - b[k]).abs() <= 1e-7));
    }
    assert!(write_mesh(&dir.path().join("m.stl"), &mesh).is_err());
}

#[test]
fn obj_face_forms() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.obj");
    fs::write(&path, "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/1 3//1 4\nf -4 -2 -1\n").unwrap();
    let m: TriMesh = read_mesh(&path).unwrap();
    assert_eq!(m.triangles(), &[[0, 1, 2], [0, 2, 3], [0, 2, 3]]);
    fs::write(&path, "v 0 0 0\nf 1 2 3\n").unwrap();
    assert!(read_mesh(&path).is_err());
}
