mod common;

use std::io::{Cursor, Write};

use common::*;
use omix::fvs1::{read_dataset, write_dataset, Fvs1Reader, Fvs1Writer, HEADER_LEN};
use omix::model_io;
use omix::source::{open_source, read_all, CsvSource, SampleSource};
use omix::{Dataset, Error};
use proptest::prelude::*;

fn f32_rows(dim: usize) -> impl Strategy<Value = Dataset> {
    (1usize..40).prop_flat_map(move |n| {
        prop::collection::vec(-1e30f32..1e30f32, n * dim)
            .prop_map(move |v| Dataset::new(dim, v.into_iter().map(f64::from).collect()).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fvs1_round_trip_is_bitwise(dim in 1usize..6, seed in any::<u64>()) {
        let data = {
            let mut r = rng(seed);
            let n = 1 + (seed % 50) as usize;
            let v: Vec<f64> = (0..n * dim).map(|_| f64::from(normal(&mut r) as f32 * 1e3)).collect();
            Dataset::new(dim, v).unwrap()
        };
        let bytes = write_dataset(Vec::new(), &data).unwrap();
        prop_assert_eq!(bytes.len(), HEADER_LEN + 4 * data.as_slice().len());
        let back = read_dataset(Cursor::new(bytes)).unwrap();
        prop_assert_eq!(back.dim(), dim);
        let same = back.as_slice().iter().zip(data.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn csv_and_fvs1_agree_bitwise(data in f32_rows(3)) {
        let mut csv = String::from("# a header comment\n");
        for row in data.rows() {
            let fields: Vec<String> = row.iter().map(|v| format!("{:?}", *v as f32)).collect();
            csv.push_str(&fields.join(","));
            csv.push('\n');
        }
        let from_csv = read_all(&mut CsvSource::new(Cursor::new(csv)).unwrap()).unwrap();
        let bytes = write_dataset(Vec::new(), &data).unwrap();
        let from_bin = read_dataset(Cursor::new(bytes)).unwrap();
        let same = from_csv.as_slice().iter().zip(from_bin.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert_eq!(from_csv.len(), from_bin.len());
        prop_assert!(same);
    }

    #[test]
    fn model_text_round_trip(seed in any::<u64>(), mst in any::<bool>(), k in 1usize..5, d in 1usize..4) {
        let mut r = rng(seed);
        let model = if mst {
            random_mst_model(&mut r, k, d, 1.0, (0.1, 500.0))
        } else {
            random_gaussian_model(&mut r, k, d, 1.0)
        };
        let text = model_io::serialize(&model);
        let back = model_io::deserialize(&text).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(model_io::serialize(&back), text);
    }
}

#[test]
fn non_finite_values_are_rejected_on_both_sides() {
    let mut w = Fvs1Writer::new(Vec::new(), 2, 0).unwrap();
    assert!(matches!(w.write_row(&[1.0, f64::NAN]), Err(Error::Data(_))));
    // a value that overflows f32 is not silently stored as infinity
    assert!(matches!(w.write_row(&[1e300, 0.0]), Err(Error::Data(_))));

    let mut bytes = write_dataset(Vec::new(), &dataset(2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
    let nan = f32::NAN.to_le_bytes();
    bytes[HEADER_LEN + 4..HEADER_LEN + 8].copy_from_slice(&nan);
    assert!(matches!(read_dataset(Cursor::new(bytes)), Err(Error::Data(_))));

    let csv = "1.0,2.0\nnan,3.0\n";
    let mut src = CsvSource::new(Cursor::new(csv)).unwrap();
    assert!(matches!(read_all(&mut src), Err(Error::Data(_))));
}

#[test]
fn malformed_streams_are_format_errors() {
    assert!(matches!(read_dataset(Cursor::new(b"FVS1".to_vec())), Err(Error::Format(_))));
    let mut bad_magic = write_dataset(Vec::new(), &dataset(1, &[1.0])).unwrap();
    bad_magic[0] = b'X';
    assert!(matches!(read_dataset(Cursor::new(bad_magic)), Err(Error::Format(_))));

    // declared three rows, two present
    let mut short = write_dataset(Vec::new(), &dataset(1, &[1.0, 2.0, 3.0])).unwrap();
    short.truncate(short.len() - 4);
    assert!(matches!(read_dataset(Cursor::new(short)), Err(Error::Format(_))));

    // unknown length, partial trailing row
    let mut w = Fvs1Writer::new(Vec::new(), 2, 0).unwrap();
    w.write_row(&[1.0, 2.0]).unwrap();
    let mut ragged = w.finish().unwrap();
    ragged.extend_from_slice(&[0, 0]);
    assert!(matches!(read_dataset(Cursor::new(ragged)), Err(Error::Format(_))));

    assert!(matches!(CsvSource::new(Cursor::new("1,2\n3\n")).and_then(|mut s| read_all(&mut s)), Err(Error::Format(_))));
    assert!(matches!(CsvSource::new(Cursor::new("# nothing\n")), Err(Error::Format(_))));
    assert!(matches!(CsvSource::new(Cursor::new("1,abc\n")), Err(Error::Format(_))));
}

#[test]
fn unknown_length_streams_read_to_the_end() {
    let mut w = Fvs1Writer::new(Vec::new(), 3, 0).unwrap();
    for i in 0..10 {
        w.write_row(&[i as f64, 0.5, -1.0]).unwrap();
    }
    let bytes = w.finish().unwrap();
    let mut r = Fvs1Reader::new(Cursor::new(bytes)).unwrap();
    assert_eq!(r.len_hint(), None);
    let mut out = Vec::new();
    assert_eq!(r.read_rows(&mut out, 4).unwrap(), 4);
    assert_eq!(r.read_rows(&mut out, 100).unwrap(), 6);
    assert_eq!(r.read_rows(&mut out, 100).unwrap(), 0);
    assert_eq!(out[27], 9.0);
}

#[test]
fn open_source_sniffs_the_format() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(2, &[0.25, -1.5, 3.0, 4.5]);
    let bin = dir.path().join("a.fvs1");
    omix::fvs1::write_dataset_file(&bin, &data).unwrap();
    let csv = dir.path().join("a.csv");
    std::fs::File::create(&csv).unwrap().write_all(b"0.25,-1.5\n3.0,4.5\n").unwrap();
    for p in [bin, csv] {
        let got = read_all(&mut open_source(&p).unwrap()).unwrap();
        assert_eq!(got.as_slice(), data.as_slice());
    }
    assert!(matches!(open_source(dir.path().join("missing")), Err(Error::Io(_))));
}

#[test]
fn model_files_reject_inconsistent_content() {
    let good = "omix-model v1\nfamily gaussian\nK 1\nM 1\nweights 1.0\ncomponent 0\nmu 0.0\nsigma 2.0\n";
    assert!(model_io::deserialize(good).is_ok());
    for bad in [
        good.replace("v1", "v9"),
        good.replace("sigma 2.0", "sigma -2.0"),
        good.replace("K 1", "K 2"),
        good.replace("mu 0.0", "mu 0.0 1.0"),
        good.replace("family gaussian", "family cauchy"),
        good.replace("mu 0.0", "mu nan"),
    ] {
        assert!(model_io::deserialize(&bad).is_err(), "accepted:\n{bad}");
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    let model = model_io::deserialize(good).unwrap();
    model_io::save(&model, &path).unwrap();
    assert_eq!(model_io::load(&path).unwrap(), model);
}
