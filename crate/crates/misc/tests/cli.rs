mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use misc::io::{read_image, write_png};
use misc::report::{self, Format};
use misc_core::MiscContainer;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn misc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_misc"))
        .args(args)
        .env_remove("MISC_ENDPOINT")
        .env_remove("MISC_TOKEN")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_input(dir: &Path, name: &str, w: u32, h: u32) -> PathBuf {
    let p = dir.join(name);
    write_png(&p, &common::test_image(w, h)).unwrap();
    p
}

#[test]
fn encode_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), "in.png", 512, 512);
    let out = dir.path().join("out.mscb");
    let o = misc(&["encode", "--level", "1", "--backend", "mock", "--seed", "0", s(&input), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let o = misc(&["inspect", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().contains("J=3"), "{text}");
    let total = text.lines().find(|l| l.trim_start().starts_with("total")).unwrap();
    let bpp: f64 = total.split_whitespace().rev().nth(1).unwrap().parse().unwrap();
    assert!(bpp < 0.024, "{bpp}");
    assert_eq!(text.lines().filter(|l| l.starts_with("map ")).count(), 3);
}

#[test]
fn truncated_container_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), "in.png", 64, 48);
    let out = dir.path().join("a.mscb");
    assert!(misc(&["encode", s(&input), "-o", s(&out)]).status.success());
    let bytes = std::fs::read(&out).unwrap();
    std::fs::write(&out, &bytes[..bytes.len() / 2]).unwrap();
    let o = misc(&["inspect", s(&out)]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(String::from_utf8_lossy(&o.stderr).lines().count(), 1);
    assert_eq!(misc(&["decode", s(&out)]).status.code(), Some(4));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.png");
    assert_eq!(misc(&["encode", s(&missing)]).status.code(), Some(3));
    let junk = dir.path().join("junk.png");
    std::fs::write(&junk, b"not a png").unwrap();
    assert_eq!(misc(&["encode", s(&junk)]).status.code(), Some(4));
    assert_eq!(misc(&["encode", "--frobnicate", s(&junk)]).status.code(), Some(2));
    assert_eq!(misc(&["encode", "--level", "4", s(&junk)]).status.code(), Some(2));
    assert_eq!(misc(&["frobnicate"]).status.code(), Some(2));
    let input = write_input(dir.path(), "in.png", 32, 32);
    assert_eq!(misc(&["encode", "--level", "3", "--ndm-keep", "2", s(&input)]).status.code(), Some(2));
    assert_eq!(misc(&["encode", "--backend", "remote", s(&input)]).status.code(), Some(2));
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("http://127.0.0.1:{port}");
    assert_eq!(misc(&["encode", "--backend", "remote", "--endpoint", &endpoint, s(&input)]).status.code(), Some(5));
    assert_eq!(misc(&["--help"]).status.code(), Some(0));
}

#[test]
fn help_lists_every_flag() {
    let text = stdout(&misc(&["encode", "--help"]));
    for flag in [
        "--level", "--backend", "--endpoint", "--token", "--seed", "--timeout", "--jobs", "--drop-ndm",
        "--drop-detail-all", "--drop-bitstream", "--ndm-keep", "--output", "MISC_ENDPOINT", "MISC_TOKEN",
    ] {
        assert!(text.contains(flag), "encode --help lacks {flag}");
    }
    let text = stdout(&misc(&["roundtrip", "--help"]));
    assert!(text.contains("--format") && text.contains("--report"));
}

#[test]
fn evaluate_ramp_fixture() {
    let o = misc(&["evaluate", "--table", s(&fixture("ramp.csv"))]);
    assert_eq!(o.status.code(), Some(0));
    let r = report::parse_report(&o.stdout, Format::Json).unwrap();
    let v: Vec<f64> = r.rows.iter().map(|r| r.values[0]).collect();
    assert_eq!(v, [-1.0, 0.0, 1.0]);

    let o = misc(&["evaluate", "--table", s(&fixture("ramp.csv")), "--format", "csv"]);
    let text = stdout(&o);
    assert!(text.contains("a,-1,-1") && text.contains("b,0,0") && text.contains("c,1,1"), "{text}");
}

#[test]
fn golden_report_files() {
    for (fmt, name) in [("csv", "report_3x4.csv"), ("json", "report_3x4.json")] {
        let o = misc(&["evaluate", "--table", s(&fixture("metrics_3x4.csv")), "--format", fmt]);
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(o.stdout, std::fs::read(fixture(name)).unwrap(), "{name}");
    }
    let csv = report::parse_report(&std::fs::read(fixture("report_3x4.csv")).unwrap(), Format::Csv).unwrap();
    let json = report::parse_report(&std::fs::read(fixture("report_3x4.json")).unwrap(), Format::Json).unwrap();
    assert_eq!(csv, json);
    assert_eq!((csv.rows.len(), csv.columns.len()), (3, 4));
    assert_eq!(csv.rows[1].label, "hific, low");
}

#[test]
fn evaluate_rejects_tables_without_direction_row() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.csv");
    std::fs::write(&t, "label,m\na,1\nb,2\n").unwrap();
    assert_eq!(misc(&["evaluate", "--table", s(&t)]).status.code(), Some(4));
}

#[test]
fn decode_restores_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), "in.png", 75, 41);
    let c = dir.path().join("in.mscb");
    assert!(misc(&["encode", "--level", "2", s(&input)]).status.success());
    let out = dir.path().join("rec.png");
    assert!(misc(&["decode", s(&c), "-o", s(&out)]).status.success());
    assert_eq!(read_image(&out).unwrap().dimensions(), (75, 41));

    let original = std::fs::read(&input).unwrap();
    assert!(misc(&["decode", s(&c)]).status.success());
    assert_eq!(std::fs::read(&input).unwrap(), original, "decode must not overwrite the source raster");
    assert!(dir.path().join("in.rec.png").exists());
}

#[test]
fn outputs_are_deterministic_and_jobs_do_not_change_them() {
    let dir = tempfile::tempdir().unwrap();
    let inputs: Vec<PathBuf> = (0..4).map(|k| write_input(dir.path(), &format!("i{k}.png"), 40 + 10 * k, 50)).collect();
    let mut args = vec!["encode", "--jobs", "1", "-o"];
    let serial = dir.path().join("serial");
    let parallel = dir.path().join("parallel");
    args.push(s(&serial));
    args.extend(inputs.iter().map(|p| s(p)));
    assert!(misc(&args).status.success());
    args[2] = "3";
    args[4] = s(&parallel);
    assert!(misc(&args).status.success());
    for k in 0..4 {
        let name = format!("i{k}.mscb");
        let a = std::fs::read(serial.join(&name)).unwrap();
        assert_eq!(a, std::fs::read(parallel.join(&name)).unwrap());
        MiscContainer::parse(&a).unwrap();
    }
}

#[test]
fn roundtrip_writes_outputs_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_input(dir.path(), "a.png", 64, 64);
    let b = write_input(dir.path(), "b.png", 48, 80);
    let out = dir.path().join("out");
    let report_path = dir.path().join("report.csv");
    let o = misc(&["roundtrip", "--jobs", "2", "--format", "csv", "--report", s(&report_path), "-o", s(&out), s(&a), s(&b)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["a.mscb", "a.rec.png", "b.mscb", "b.rec.png"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let table = report::parse_table(&std::fs::read(&report_path).unwrap(), Format::Csv).unwrap();
    let names: Vec<&str> = table.columns().iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names[0], "bpp");
    assert!(names.contains(&"psnr") && names.contains(&"mse"));
    assert_eq!(table.rows()[0].label, "a");
    let bytes = std::fs::read(out.join("a.mscb")).unwrap();
    assert_eq!(table.rows()[0].values[0], bytes.len() as f64 * 8.0 / (64.0 * 64.0));
}

#[test]
fn ablation_flags_shrink_the_container() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), "in.png", 256, 256);
    let size = |extra: &[&str], name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["encode"];
        args.extend_from_slice(extra);
        args.extend([s(&input), "-o", s(&out)]);
        assert!(misc(&args).status.success());
        std::fs::metadata(&out).unwrap().len()
    };
    let full = size(&[], "full.mscb");
    let two = size(&["--ndm-keep", "2"], "two.mscb");
    let none = size(&["--drop-ndm"], "none.mscb");
    let bare = size(&["--drop-ndm", "--drop-detail-all", "--drop-bitstream"], "bare.mscb");
    assert!(full > two && two > none && none > bare, "{full} {two} {none} {bare}");
}

#[test]
fn remote_backend_through_cli_matches_mock() {
    let server = common::stub_server();
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), "in.png", 60, 60);
    let via_mock = dir.path().join("mock.mscb");
    let via_remote = dir.path().join("remote.mscb");
    assert!(misc(&["encode", "--seed", "3", s(&input), "-o", s(&via_mock)]).status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_misc"))
        .args(["encode", "--backend", "remote", "--seed", "3", s(&input), "-o", s(&via_remote)])
        .env("MISC_ENDPOINT", &server.url)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(via_mock).unwrap(), std::fs::read(via_remote).unwrap());
}
