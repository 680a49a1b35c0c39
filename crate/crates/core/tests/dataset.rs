use std::fs;

use leadvel::dataset::{
    load_scene, load_tracking_images, pgm::dequantize, read_disparity_pgm, read_gray_pgm, save_scene,
    write_disparity_pgm,
};
use leadvel::synth::{generate_scene, ScenarioConfig, VelocityProfile};
use leadvel::{DisparityMap, Error};

#[test]
fn disparity_pgm_bytes_are_big_endian_q8_8() {
    let mut bytes = b"P5\n3 1\n65535\n".to_vec();
    bytes.extend_from_slice(&[0x18, 0x80, 0x00, 0x01, 0xFF, 0xFF]);
    let map = read_disparity_pgm(&bytes).unwrap();
    assert_eq!(map.values, vec![24.5, 1.0 / 256.0, 65535.0 / 256.0]);
    assert_eq!(write_disparity_pgm(&map), bytes);
}

#[test]
fn pgm_headers_may_carry_comments() {
    let bytes = b"P5 # comment\n2 # w\n1\n255\n\x07\x09";
    let img = read_gray_pgm(bytes).unwrap();
    assert_eq!((img.width, img.height, img.values.clone()), (2, 1, vec![7, 9]));
}

#[test]
fn pgm_rejects_bad_input() {
    assert!(matches!(read_gray_pgm(b"P2\n1 1\n255\n0"), Err(Error::BadMagic)));
    assert!(matches!(
        read_gray_pgm(b"P5\n1 1\n65535\n\0\0"),
        Err(Error::BadMaxval { found: 65535, expected: 255 })
    ));
    assert!(matches!(
        read_disparity_pgm(b"P5\n2 2\n65535\n\0\0\0"),
        Err(Error::TruncatedPayload { needed: 8, available: 3 })
    ));
    assert!(matches!(read_gray_pgm(b"P5\n1"), Err(Error::BadHeader(_))));
}

#[test]
fn generated_scene_survives_a_disk_round_trip() {
    let cfg = ScenarioConfig {
        n_frames: 8,
        image_width: 120,
        image_height: 90,
        lead: VelocityProfile::Sinusoidal { v0: 14.0, amplitude: 2.0, period_s: 3.0 },
        ego: VelocityProfile::Constant { v: 14.0 },
        disparity_noise_px: 0.5,
        contamination: 0.3,
        ..ScenarioConfig::default()
    };
    let g = generate_scene(&cfg, "rt").unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_scene(&g.scene, &g.images, dir.path()).unwrap();
    let loaded = load_scene(dir.path()).unwrap();
    let mut quantized = g.scene.clone();
    for f in &mut quantized.frames {
        f.disparity.values.iter_mut().for_each(|v| *v = dequantize(*v));
    }
    assert_eq!(loaded, quantized);
    assert_eq!(load_tracking_images(dir.path()).unwrap(), g.images);

    // saving a loaded scene reproduces the files byte for byte
    let again = tempfile::tempdir().unwrap();
    save_scene(&loaded, &g.images, again.path()).unwrap();
    for entry in fs::read_dir(dir.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(dir.path().join(&name)).unwrap(),
            fs::read(again.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn load_errors_are_typed() {
    let cfg = ScenarioConfig { n_frames: 3, image_width: 60, image_height: 40, ..ScenarioConfig::default() };
    let g = generate_scene(&cfg, "err").unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_scene(&g.scene, &g.images, dir.path()).unwrap();
    let manifest = fs::read_to_string(dir.path().join("scene.json")).unwrap();

    fs::remove_file(dir.path().join("img_0001.pgm")).unwrap();
    assert!(matches!(load_scene(dir.path()), Err(Error::MissingFile(n)) if n == "img_0001.pgm"));
    fs::write(dir.path().join("img_0001.pgm"), leadvel::dataset::write_gray_pgm(&g.images[1])).unwrap();

    fs::write(dir.path().join("disp_0002.pgm"), write_disparity_pgm(&DisparityMap::filled(60, 41, 1.0))).unwrap();
    assert!(matches!(
        load_scene(dir.path()),
        Err(Error::RasterShapeMismatch { declared_h: 40, actual_h: 41, .. })
    ));
    fs::write(dir.path().join("disp_0002.pgm"), write_disparity_pgm(&g.scene.frames[2].disparity)).unwrap();

    fs::write(dir.path().join("scene.json"), manifest.replacen("\"fps\": 10.0", "\"fps\": -1.0", 1)).unwrap();
    assert!(matches!(load_scene(dir.path()), Err(Error::InvariantViolation(_))));

    fs::write(dir.path().join("scene.json"), &manifest[..manifest.len() / 2]).unwrap();
    let err = load_scene(dir.path()).unwrap_err();
    assert!(matches!(err, Error::MalformedJson { .. }));
    assert_eq!(err.kind(), leadvel::ErrorKind::Data);

    fs::write(dir.path().join("scene.json"), &manifest).unwrap();
    assert_eq!(load_scene(dir.path()).unwrap().len(), 3);
}
