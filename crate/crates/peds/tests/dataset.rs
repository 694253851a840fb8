use peds::dataset::{gen_data, label, Dataset, GenConfig, TEST_STREAM};
use peds::Error;
use peds_core::geometry::{Family, GeometryParams};
use peds_core::solvers::HighFidelity;

fn small(family: Family, n: usize, resolution: usize) -> GenConfig {
    GenConfig {
        resolution,
        ..GenConfig::new(family, n, 3)
    }
}

#[test]
fn empty_lattice_has_unit_flux() {
    let hf = HighFidelity::new(Family::Fourier16, 100).unwrap();
    let p = GeometryParams::new(Family::Fourier16, vec![0.0; 16], None).unwrap();
    let (r, t) = label(&hf, &[p]).pop().unwrap();
    assert!((r.unwrap()[0] - 1.0).abs() < 1e-12);
    assert!(t > 0.0);
}

#[test]
fn generation_is_bitwise_reproducible() {
    let cfg = GenConfig::new(Family::Fourier16, 100, 11);
    let a = gen_data(&cfg).unwrap();
    let b = gen_data(&cfg).unwrap();
    assert_eq!(a.to_jsonl(), b.to_jsonl());
    assert_eq!(a.len(), 100);
    assert_eq!(a.timings.len(), 100);
}

#[test]
fn write_read_write_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (family, res) in [(Family::Fisher16, 12), (Family::Maxwell10, 10)] {
        let d = gen_data(&small(family, 4, res)).unwrap();
        let path = dir.path().join(format!("{family}.jsonl"));
        d.write(&path).unwrap();
        let back = Dataset::read(&path).unwrap();
        assert_eq!(back.samples, d.samples);
        assert_eq!(back.timings, d.timings);
        let path2 = dir.path().join(format!("{family}-2.jsonl"));
        back.write(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}

#[test]
fn maxwell_lines_carry_real_and_imaginary_parts() {
    let d = gen_data(&small(Family::Maxwell10, 2, 10)).unwrap();
    let text = d.to_jsonl();
    let line: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    assert_eq!(line["target_re"][0].as_f64().unwrap(), d.samples[0].target[0]);
    assert_eq!(line["target_im"][0].as_f64().unwrap(), d.samples[0].target[1]);
    let diffusion = gen_data(&small(Family::Fourier16, 1, 12)).unwrap().to_jsonl();
    assert!(!diffusion.contains("target_im"));
}

#[test]
fn streams_are_disjoint() {
    let train = gen_data(&small(Family::Fourier25, 20, 10)).unwrap();
    let test = gen_data(&GenConfig {
        stream: TEST_STREAM,
        ..small(Family::Fourier25, 20, 10)
    })
    .unwrap();
    assert_eq!(peds::dataset::overlap(&train.samples, &test.samples), 0);
}

#[test]
fn malformed_input_reports_line() {
    let d = gen_data(&small(Family::Fourier16, 2, 12)).unwrap();
    let mut text = d.to_jsonl();
    text.push_str("{\"params\": 3}\n");
    match Dataset::from_jsonl(&text, "x") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
    let wrong_count = d.to_jsonl().replacen("\"n_samples\":2", "\"n_samples\":3", 1);
    assert!(matches!(Dataset::from_jsonl(&wrong_count, "x"), Err(Error::Dataset(_))));
    let e = Dataset::from_jsonl("", "x").unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn zero_samples_rejected() {
    assert!(matches!(gen_data(&small(Family::Fourier16, 0, 12)), Err(Error::Input(_))));
}
