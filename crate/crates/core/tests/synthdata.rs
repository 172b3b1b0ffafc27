use augpolicy::augment::Image;
use augpolicy::synthdata::{
    generate, render_sample, Dataset, DatasetManifest, DomainCounts, DomainSpec, SeamGeometry, SplitRatios, LABELS_CSV,
};
use augpolicy::{Error, Label};

fn manifest(real: usize, fake: usize) -> DatasetManifest {
    DatasetManifest {
        seed: 3,
        width: 24,
        height: 20,
        channels: 3,
        counts: vec![
            DomainCounts { domain: 0, real, fake },
            DomainCounts { domain: 1, real, fake },
        ],
        splits: SplitRatios::default(),
    }
}

fn two_domains(seed: u64) -> Dataset {
    let m = manifest(7, 5);
    let mut items = generate(&DomainSpec::domain_a(), &m, seed).unwrap();
    items.extend(generate(&DomainSpec::domain_b(), &m, seed).unwrap());
    Dataset::new(24, 20, 3, items).unwrap()
}

#[test]
fn generation_is_deterministic_and_counts_match() {
    let a = two_domains(11);
    assert_eq!(a.to_bytes(), two_domains(11).to_bytes());
    assert_ne!(a.to_bytes(), two_domains(12).to_bytes());
    assert_eq!(a.len(), 24);
    assert_eq!(a.count(Label::Real), 14);
    assert_eq!(a.count(Label::Fake), 10);
    for d in [0u8, 1] {
        let real = a.items().iter().filter(|i| i.domain == d && i.label == Label::Real).count();
        let fake = a.items().iter().filter(|i| i.domain == d && i.label == Label::Fake).count();
        assert_eq!((real, fake), (7, 5));
    }
    assert!(a.items().iter().all(|i| i.image.dims() == (24, 20, 3)));
}

#[test]
fn grayscale_generation() {
    let mut m = manifest(2, 2);
    m.channels = 1;
    let items = generate(&DomainSpec::domain_a(), &m, 0).unwrap();
    assert!(items.iter().all(|i| i.image.channels() == 1));
}

/// Mean |horizontal| + |vertical| luma difference over pixels whose
/// normalized elliptical radius lies within the seam band.
fn seam_gradient(img: &Image, g: &SeamGeometry) -> f64 {
    let luma = img.luma();
    let (w, h) = (img.width(), img.height());
    let (mut sum, mut n) = (0.0f64, 0usize);
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let dx = (x as f32 + 0.5 - g.cx) / g.rx;
            let dy = (y as f32 + 0.5 - g.cy) / g.ry;
            let r = (dx * dx + dy * dy).sqrt();
            if (0.85..=1.15).contains(&r) {
                let v = luma[y * w + x];
                sum += ((luma[y * w + x + 1] - v).abs() + (luma[(y + 1) * w + x] - v).abs()) as f64;
                n += 1;
            }
        }
    }
    sum / n.max(1) as f64
}

#[test]
fn seam_ring_is_sharper_for_fakes() {
    for spec in [DomainSpec::domain_a(), DomainSpec::domain_b()] {
        let (mut real, mut fake, mut wins) = (0.0, 0.0, 0);
        let pairs = 200;
        for s in 0..pairs {
            let (r, gr) = render_sample(&spec, 32, 32, 3, Label::Real, s).unwrap();
            let (f, gf) = render_sample(&spec, 32, 32, 3, Label::Fake, s).unwrap();
            assert_eq!(gr, gf, "geometry must not depend on the label");
            let (a, b) = (seam_gradient(&r, &gr), seam_gradient(&f, &gf));
            real += a;
            fake += b;
            wins += usize::from(b > a);
        }
        assert!(fake > real * 1.2, "{}: fake {fake} vs real {real}", spec.name);
        assert!(wins * 10 >= pairs as usize * 8, "{}: fake sharper in {wins}/{pairs}", spec.name);
    }
}

#[test]
fn dfta_round_trip_is_byte_identical() {
    let ds = two_domains(1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.dfta");
    ds.save(&path).unwrap();
    let back = Dataset::load(&path).unwrap();
    assert_eq!(back, ds);
    assert_eq!(std::fs::read(&path).unwrap(), back.to_bytes());
    assert_eq!(&back.to_bytes()[..4], b"DFTA");
}

#[test]
fn dfta_header_layout() {
    let ds = two_domains(1);
    let b = ds.to_bytes();
    assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
    assert_eq!(u32::from_le_bytes([b[6], b[7], b[8], b[9]]), 24);
    assert_eq!(u16::from_le_bytes([b[10], b[11]]), 24);
    assert_eq!(u16::from_le_bytes([b[12], b[13]]), 20);
    assert_eq!(u16::from_le_bytes([b[14], b[15]]), 3);
    let first = &ds.items()[0];
    assert_eq!(b[16], first.label.index() as u8);
    assert_eq!(b[17], first.domain);
    assert_eq!(&b[18..18 + 24 * 20 * 3], first.image.pixels());
    assert_eq!(b.len(), 16 + 24 * (2 + 24 * 20 * 3));
}

#[test]
fn truncated_dfta_reports_position() {
    let b = two_domains(1).to_bytes();
    for cut in [0, 3, 10, 17, 100, b.len() - 1] {
        match Dataset::from_bytes(&b[..cut]) {
            Err(Error::Parse { offset, .. }) => assert!(offset as usize <= cut, "cut {cut} offset {offset}"),
            other => panic!("cut {cut}: {other:?}"),
        }
    }
}

#[test]
fn corrupt_dfta_rejected() {
    let good = two_domains(1).to_bytes();
    let mut bad = good.clone();
    bad[0] = b'X';
    assert!(matches!(Dataset::from_bytes(&bad), Err(Error::Parse { offset: 0, .. })));
    let mut bad = good.clone();
    bad[4] = 9;
    assert!(matches!(Dataset::from_bytes(&bad), Err(Error::Parse { .. })));
    let mut bad = good.clone();
    bad[16] = 2;
    assert!(matches!(Dataset::from_bytes(&bad), Err(Error::Parse { offset: 16, .. })));
    let mut bad = good.clone();
    bad.push(0);
    assert!(matches!(Dataset::from_bytes(&bad), Err(Error::Parse { .. })));
}

#[test]
fn png_directory_round_trip() {
    let ds = two_domains(2);
    let dir = tempfile::tempdir().unwrap();
    ds.export_png_dir(dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join(LABELS_CSV)).unwrap();
    assert!(csv.starts_with("filename,label,domain\n"));
    assert_eq!(csv.lines().count(), ds.len() + 1);
    assert_eq!(Dataset::import_png_dir(dir.path()).unwrap(), ds);
}

#[test]
fn png_directory_with_missing_file_is_an_error() {
    let ds = two_domains(2);
    let dir = tempfile::tempdir().unwrap();
    ds.export_png_dir(dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("00003.png")).unwrap();
    assert!(Dataset::import_png_dir(dir.path()).is_err());
}

#[test]
fn subset_keeps_order() {
    let ds = two_domains(4);
    let sub = ds.subset(&[5, 1]).unwrap();
    assert_eq!(sub.items(), &[ds.items()[5].clone(), ds.items()[1].clone()]);
    assert!(ds.subset(&[24]).is_err());
}
