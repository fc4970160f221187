#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geomcheck::grids::{
    normalize3, save_pfm_scalar, save_pfm_vector, NormalGrid, ScalarGrid, Sequence,
};
use geomcheck::synth::MANIFEST_NAME;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geomcheck"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn geomcheck")
}

/// Runs the CLI, asserting exit code 0, and returns stdout.
pub fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "geomcheck {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

pub fn json_file(path: &Path) -> Value {
    json(&std::fs::read_to_string(path).unwrap())
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates a walker sequence and returns its manifest path.
pub fn gen(dir: &Path, seed: u64, frames: usize, size: usize) -> PathBuf {
    run_ok(&[
        "gen-synth",
        "--seed",
        &seed.to_string(),
        "--frames",
        &frames.to_string(),
        "--size",
        &size.to_string(),
        "--out",
        s(dir),
    ]);
    dir.join(MANIFEST_NAME)
}

/// One frame of a prediction being derived from ground truth.
pub struct FrameData {
    pub depth: ScalarGrid,
    pub normals: NormalGrid,
    pub mask: ScalarGrid,
}

/// Writes a prediction sequence built by editing each ground-truth frame.
///
/// Depth, normals and masks are stored as PFM so no quantization enters the
/// prediction. The manifest lists no flows.
pub fn derive(
    gt_manifest: &Path,
    out: &Path,
    mut edit: impl FnMut(usize, &mut FrameData),
) -> PathBuf {
    let gt = Sequence::open(gt_manifest).unwrap();
    std::fs::create_dir_all(out).unwrap();
    let mut m = gt.manifest.clone();
    for k in 0..m.frame_count {
        let mut f = FrameData {
            depth: gt.depth(k).unwrap(),
            normals: gt.normal(k).unwrap(),
            mask: gt.mask(k).unwrap(),
        };
        edit(k, &mut f);
        let e = &mut m.frames[k];
        e.depth = format!("pred_depth_{k:04}.pfm");
        e.normal = format!("pred_normal_{k:04}.pfm");
        e.mask = format!("pred_mask_{k:04}.pfm");
        save_pfm_scalar(&f.depth, out.join(&e.depth)).unwrap();
        save_pfm_vector(&f.normals, out.join(&e.normal)).unwrap();
        save_pfm_scalar(&f.mask, out.join(&e.mask)).unwrap();
    }
    m.flow_fwd.clear();
    m.flow_bwd.clear();
    let path = out.join(MANIFEST_NAME);
    std::fs::write(&path, m.to_json().unwrap()).unwrap();
    path
}

/// Gaussian noise fields drawn once per seed, so `sigma` only rescales them.
pub struct Noise {
    depth: Vec<f64>,
    normals: Vec<[f64; 3]>,
}

impl Noise {
    pub fn new(seed: u64, len: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        Noise {
            depth: (0..len).map(|_| n.sample(&mut rng)).collect(),
            normals: (0..len)
                .map(|_| [0; 3].map(|_| n.sample(&mut rng)))
                .collect(),
        }
    }

    pub fn apply(&self, f: &mut FrameData, sigma: f64) {
        let (w, h) = (f.depth.width(), f.depth.height());
        f.depth = ScalarGrid::from_fn(w, h, |x, y| {
            f.depth
                .get(x, y)
                .map(|[v]| [v + sigma * self.depth[y * w + x]])
        });
        f.normals = NormalGrid::from_fn(w, h, |x, y| {
            let v = f.normals.get(x, y)?;
            let e = self.normals[y * w + x];
            normalize3(
                [
                    v[0] + sigma * e[0],
                    v[1] + sigma * e[1],
                    v[2] + sigma * e[2],
                ],
                1e-9,
            )
        });
    }
}

/// Every key path in a JSON document with its value type, one per line, sorted.
///
/// Array elements collapse to `[]`, so the schema does not depend on lengths.
pub fn schema(v: &Value) -> String {
    fn walk(v: &Value, path: &str, out: &mut Vec<String>) {
        let kind = match v {
            Value::Null => "null",
            Value::Bool(_) => "bool",
            Value::Number(_) => "number",
            Value::String(_) => "string",
            Value::Array(_) => "array",
            Value::Object(_) => "object",
        };
        out.push(format!("{path}: {kind}"));
        match v {
            Value::Array(items) => {
                for item in items {
                    walk(item, &format!("{path}[]"), out);
                }
            }
            Value::Object(map) => {
                for (k, item) in map {
                    walk(item, &format!("{path}.{k}"), out);
                }
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(v, "", &mut out);
    out.sort();
    out.dedup();
    out.join("\n") + "\n"
}
