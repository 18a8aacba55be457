//! Round trips of every on-disk format.

use std::io::Cursor;

use pslosses_core::data::{parse_xmc, read_cache, write_cache, write_xmc};
use pslosses_core::io::{read_propensities, write_propensities};
use pslosses_core::{Error, LinearModel, Propensities};

const SAMPLE: &str = "3 4 3\n0,2 0:0.5 3:1.25\n 1:2\n1 2:-0.75\n";

#[test]
fn xmc_round_trip() {
    let ds = parse_xmc(Cursor::new(SAMPLE)).unwrap();
    assert_eq!((ds.num_examples(), ds.num_features(), ds.num_labels()), (3, 4, 3));
    assert!(ds.examples()[1].labels.is_empty());
    let mut buf = Vec::new();
    write_xmc(&ds, &mut buf).unwrap();
    assert_eq!(parse_xmc(Cursor::new(buf)).unwrap(), ds);
}

#[test]
fn xmc_errors_carry_line_numbers() {
    let err = parse_xmc(Cursor::new("2 4 3\n0 1:1\n7 0:1\n")).unwrap_err();
    assert!(matches!(err, Error::Validation(_) | Error::Parse { line: 3, .. }), "{err}");
    let err = parse_xmc(Cursor::new("2 4 3\n0 1:x\n")).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
}

#[test]
fn cache_round_trip_and_bad_magic() {
    let ds = parse_xmc(Cursor::new(SAMPLE)).unwrap();
    let mut buf = Vec::new();
    write_cache(&ds, &mut buf).unwrap();
    assert_eq!(&buf[..8], b"PSLDATA\0");
    assert_eq!(read_cache(Cursor::new(&buf)).unwrap(), ds);
    buf[0] = b'X';
    assert!(read_cache(Cursor::new(&buf)).is_err());
}

#[test]
fn model_checkpoint_round_trip() {
    let model = LinearModel::init_uniform(5, 3, 42);
    let mut buf = Vec::new();
    model.write(&mut buf).unwrap();
    assert_eq!(buf.len(), 28 + 8 * (5 * 3 + 3));
    let back = LinearModel::read(Cursor::new(&buf)).unwrap();
    assert_eq!(back, model);
    assert!(LinearModel::read(Cursor::new(&buf[..buf.len() - 1])).is_err());
}

#[test]
fn propensity_file_is_bit_exact() {
    let p = Propensities::new(vec![0.1, 1.0 / 3.0, 0.965_202_796_544_649, 1.0]).unwrap();
    let mut buf = Vec::new();
    write_propensities(&p, &mut buf).unwrap();
    let back = read_propensities(Cursor::new(&buf)).unwrap();
    assert_eq!(back.as_slice(), p.as_slice());
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("0\t1.0000000000000001e-1\n"), "{text}");
}
