//! File formats checked with independent readers.

use std::fs::File;
use std::io::BufReader;

use lidar_ri::{
    cloud_to_ri, read_kitti_bin, read_pgm, synth_scene, write_kitti_bin, write_pgm, write_ply, PointCloud,
    RiGeometry, EMPTY,
};
use ply_rs::parser::Parser;
use ply_rs::ply::{DefaultElement, Property};

fn float(e: &DefaultElement, k: &str) -> f32 {
    match e.get(k) {
        Some(Property::Float(x)) => *x,
        other => panic!("{k}: {other:?}"),
    }
}

fn uchar(e: &DefaultElement, k: &str) -> u8 {
    match e.get(k) {
        Some(Property::UChar(x)) => *x,
        other => panic!("{k}: {other:?}"),
    }
}

#[test]
fn ply_parses_with_independent_reader() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ply");
    let cloud = PointCloud::with_intensity(
        vec![[1.0, -2.5, 3.25], [1e-3, 4e4, -7.0], [0.0, 0.0, 0.0]],
        Some(vec![0.1, 0.5, 0.9]),
    )
    .unwrap();
    let colors = [[255, 0, 0], [0, 255, 0], [1, 2, 3]];
    write_ply(&cloud, &path, Some(&colors)).unwrap();

    let ply = Parser::<DefaultElement>::new()
        .read_ply(&mut BufReader::new(File::open(&path).unwrap()))
        .unwrap();
    let vertices = &ply.payload["vertex"];
    assert_eq!(vertices.len(), 3);
    for (i, v) in vertices.iter().enumerate() {
        let p = cloud.points()[i];
        assert_eq!([float(v, "x"), float(v, "y"), float(v, "z")], p);
        assert_eq!(float(v, "intensity"), cloud.intensity().unwrap()[i]);
        assert_eq!([uchar(v, "red"), uchar(v, "green"), uchar(v, "blue")], colors[i]);
    }
}

#[test]
fn ply_without_extras_has_xyz_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ply");
    write_ply(&PointCloud::new(vec![[1.0, 2.0, 3.0]]).unwrap(), &path, None).unwrap();
    let ply = Parser::<DefaultElement>::new()
        .read_ply(&mut BufReader::new(File::open(&path).unwrap()))
        .unwrap();
    let v = &ply.payload["vertex"][0];
    assert_eq!(v.len(), 3);
    assert_eq!(float(v, "z"), 3.0);
}

#[test]
fn kitti_bin_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.bin");
    let cloud = synth_scene(7);
    write_kitti_bin(&cloud, &path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 16 * cloud.len() as u64);
    assert_eq!(read_kitti_bin(&path).unwrap(), cloud);
}

#[test]
fn pgm_roundtrip_within_code_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.pgm");
    let g = RiGeometry::kitti();
    let ri = cloud_to_ri(&synth_scene(2), &g);
    write_pgm(&ri, &path).unwrap();

    // hand-decode the raster
    let raw = std::fs::read(&path).unwrap();
    let header = b"P5\n2048 64\n65535\n";
    assert_eq!(&raw[..header.len()], header);
    assert_eq!(raw.len(), header.len() + 2 * 2048 * 64);

    let back = read_pgm(&path, &g).unwrap();
    let code_step = g.max_depth() as f64 / 65535.0;
    for (i, (a, b)) in ri.depth().iter().zip(back.depth()).enumerate() {
        let code = u16::from_be_bytes([raw[header.len() + 2 * i], raw[header.len() + 2 * i + 1]]);
        assert_eq!(*a == EMPTY, code == 0);
        assert_eq!(*b == EMPTY, code == 0);
        assert!(((*a as f64) - (*b as f64)).abs() <= code_step, "{a} vs {b}");
    }
}
