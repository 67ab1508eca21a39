#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use brush_core::masks::save_mask_png;
use brush_core::MaskRaster;

pub fn brush(args: &[&str], dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_brush"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("BRUSH_")) {
        cmd.env_remove(k);
    }
    cmd.args(args)
        .current_dir(dir)
        .output()
        .expect("brush runs")
}

pub fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).to_string()
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
}

/// Compares against a pinned file; `BRUSH_BLESS=1` rewrites it instead.
pub fn check_golden(name: &str, actual: &[u8], same: impl Fn(&[u8], &[u8]) -> bool) {
    let path = golden_dir().join(name);
    if std::env::var("BRUSH_BLESS").is_ok_and(|v| v == "1") {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected =
        std::fs::read(&path).unwrap_or_else(|e| panic!("missing golden {}: {e}", path.display()));
    assert!(
        same(&expected, actual),
        "output differs from golden {}",
        path.display()
    );
}

/// Center square covering half the side, at twice the 16×16 latent resolution.
pub fn write_center_mask(path: &Path) {
    let m = MaskRaster::from_fn(32, 32, |r, c| {
        if (8..24).contains(&r) && (8..24).contains(&c) {
            1.0
        } else {
            0.0
        }
    })
    .unwrap();
    std::fs::write(path, save_mask_png(&m).unwrap()).unwrap();
}

/// Temp dir with `gmm.json` (3×16×16, 4 patterns, v = 0.01), `mask.png`,
/// and `g.png`/`g.json` from a deterministic-sampler generation with seed 1.
pub fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(&brush(&["init-gmm", "--out", "gmm.json"], dir.path()));
    write_center_mask(&dir.path().join("mask.png"));
    ok(&brush(
        &[
            "generate",
            "--backend",
            "analytic:gmm.json",
            "--seed",
            "1",
            "--s-churn",
            "0",
            "--out",
            "g.png",
        ],
        dir.path(),
    ));
    dir
}

/// Sweep CSV rows without the timing column.
pub fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let wall = header.iter().position(|h| *h == "wall_ms").unwrap();
    lines
        .map(|l| {
            l.split(',')
                .enumerate()
                .filter(|(i, _)| *i != wall)
                .map(|(_, v)| v.to_string())
                .collect()
        })
        .collect()
}

/// Same cells, same parameters, metrics equal to 1e-9 relative.
pub fn csv_matches(expected: &[u8], actual: &[u8]) -> bool {
    let e = csv_rows(&String::from_utf8_lossy(expected));
    let a = csv_rows(&String::from_utf8_lossy(actual));
    e.len() == a.len()
        && e.iter().zip(&a).all(|(er, ar)| {
            er.len() == ar.len()
                && er
                    .iter()
                    .zip(ar)
                    .all(|(x, y)| match (x.parse::<f64>(), y.parse::<f64>()) {
                        (Ok(x), Ok(y)) => (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-300),
                        _ => x == y,
                    })
        })
}

pub const REFERENCE_ROWS: [&str; 2] = ["alphas=0.1,1.3,2,4,5;ns=10", "alphas=1;ns=0,5,15,25,35"];
