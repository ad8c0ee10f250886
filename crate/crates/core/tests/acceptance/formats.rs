use std::path::Path;
use std::process::Command;

use fpt::checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
use fpt::geometry::parse_off;
use fpt::net::{FptArch, FptModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Outcome};

fn checkpoint_round_trip(dir: &Path) -> Result<(), String> {
    for (arch, seed) in [(FptArch::compact(), 1), (FptArch::default(), 2)] {
        let mut model = FptModel::<f32>::init(arch, seed).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in model.params.iter_mut() {
            for v in p.value.data_mut() {
                *v = rng.random_range(-1.0f32..1.0);
            }
        }
        // values whose bit patterns a lossy path would not preserve
        let first = model.params.iter_mut().next().unwrap();
        first.value.data_mut()[..4].copy_from_slice(&[-0.0, f32::MIN_POSITIVE / 2.0, f32::MAX, 1.0e-38]);

        let path = dir.join(format!("m{seed}.fpt"));
        save_checkpoint(&model, &path).map_err(|e| e.to_string())?;
        let loaded = load_checkpoint(&path).map_err(|e| e.to_string())?;
        ensure!(loaded.arch == model.arch, "architecture changed on reload");
        for (a, b) in model.params.iter().zip(loaded.params.iter()) {
            ensure!(
                a.name == b.name && a.value.shape() == b.value.shape(),
                "parameter {} changed layout",
                a.name
            );
            ensure!(
                a.value.data().iter().map(|v| v.to_bits()).eq(b.value.data().iter().map(|v| v.to_bits())),
                "parameter {} not bitwise equal after reload",
                a.name
            );
        }
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        let again = encode_checkpoint(&decode_checkpoint(&bytes).map_err(|e| e.to_string())?.model, serde_json::Value::Null)
            .map_err(|e| e.to_string())?;
        ensure!(again == bytes, "re-encoding a loaded checkpoint changed its bytes");
    }
    Ok(())
}

fn off_cases() -> Result<(), String> {
    let minimal = parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").map_err(|e| e.to_string())?;
    ensure!(
        minimal.vertices.len() == 3 && minimal.faces == vec![[0, 1, 2]],
        "minimal OFF parsed as {minimal:?}"
    );
    let quad = parse_off("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n").map_err(|e| e.to_string())?;
    ensure!(quad.faces == vec![[0, 1, 2], [0, 2, 3]], "quad fan gave {:?}", quad.faces);
    ensure!((quad.total_area() - 1.0).abs() < 1e-12, "quad area {}", quad.total_area());
    let fused = parse_off("OFF3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").map_err(|e| e.to_string())?;
    ensure!(fused == minimal, "fused header parsed differently from the minimal file");
    Ok(())
}

fn fpt_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fpt"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "fpt {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

fn read(dir: &Path, name: &str) -> Result<String, String> {
    std::fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"))
}

/// Drops the comma-separated field at `col` from every line.
fn without_column(text: &str, col: usize) -> String {
    text.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            if col < f.len() {
                f.remove(col);
            }
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Runs every subcommand twice per seed, in separate directories, and
/// compares the outputs.
fn cli_reproducibility(root: &Path) -> Result<usize, String> {
    let mut compared = 0;
    let runs: Vec<_> = ["a", "b"].iter().map(|r| root.join(r)).collect();
    for (i, dir) in runs.iter().enumerate() {
        std::fs::create_dir_all(dir.join("shapes")).map_err(|e| e.to_string())?;
        let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
        let threads = if i == 0 { "1" } else { "2" };
        for (k, prim) in ["chair", "table", "lamp"].iter().enumerate() {
            let seed = k.to_string();
            fpt_cli(&["sample", "--primitive", prim, "--n", "256", "--seed", &seed, "--normalize",
                "--out", &p(&format!("shapes/{prim}.xyz"))])?;
        }
        fpt_cli(&["sample", "--primitive", "spine", "--n", "512", "--seed", "4", "--out", &p("spine.xyz"),
            "--landmarks-out", &p("lm.json")])?;
        fpt_cli(&["sample", "--primitive", "spine", "--n", "512", "--seed", "5", "--bend-seed", "3",
            "--out", &p("bent.xyz")])?;
        fpt_cli(&["--threads", threads, "train", "--shapes", &p("shapes"), "--steps", "6", "--batch-size", "2",
            "--num-points", "128", "--arch", "compact", "--seed", "11", "--checkpoint-every", "3",
            "--checkpoint-dir", &p("ck"), "--out", &p("model.fpt"), "--loss-log", &p("loss.csv")])?;
        fpt_cli(&["register", "--checkpoint", &p("model.fpt"), "--source", &p("shapes/chair.xyz"),
            "--target", &p("shapes/lamp.xyz"), "--out", &p("moved.xyz")])?;
        fpt_cli(&["--threads", threads, "benchmark", "--protocol", "nonrigid", "--occlusion", "partial-to-full",
            "--shapes", &p("shapes"), "--checkpoint", &p("model.fpt"), "--seed", "2", "--num-points", "128",
            "--pairs-per-shape", "2", "--out", &p("report.csv")])?;
        fpt_cli(&["txa", "--checkpoint", &p("model.fpt"), "--model", &p("spine.xyz"), "--landmarks", &p("lm.json"),
            "--recon", &p("bent.xyz"), "--upper", "T4", "--lower", "T10", "--out", &p("txa.json")])?;
    }
    let (a, b) = (&runs[0], &runs[1]);
    for name in ["shapes/chair.xyz", "shapes/table.xyz", "shapes/lamp.xyz", "spine.xyz", "lm.json", "bent.xyz",
        "moved.xyz", "txa.json"]
    {
        ensure!(read(a, name)? == read(b, name)?, "{name} differs between runs");
        compared += 1;
    }
    for name in ["model.fpt", "ck/step_000003.fpt", "ck/step_000006.fpt"] {
        let (x, y) = (std::fs::read(a.join(name)), std::fs::read(b.join(name)));
        ensure!(x.is_ok() && x.ok() == y.ok(), "{name} differs between runs");
        compared += 1;
    }
    ensure!(
        without_column(&read(a, "loss.csv")?, 2) == without_column(&read(b, "loss.csv")?, 2),
        "loss log differs between runs"
    );
    ensure!(
        without_column(&read(a, "report.csv")?, 3) == without_column(&read(b, "report.csv")?, 3),
        "benchmark report differs between runs"
    );
    Ok(compared + 2)
}

pub fn formats() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    checkpoint_round_trip(dir.path())?;
    off_cases()?;
    let files = cli_reproducibility(dir.path())?;
    Ok(format!(
        "checkpoint round trip bitwise (compact and default arch); OFF minimal/quad/fused header; {files} CLI outputs byte-identical across runs (timing columns excluded)"
    ))
}
