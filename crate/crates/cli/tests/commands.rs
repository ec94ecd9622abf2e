mod common;

use common::{fixture, p, read_tree, run, run_ok};

#[test]
fn eval_on_identical_pair_reports_exact_match() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let img = f.data.join("scene_0000").join("view_000.png");
    let out = dir.path().join("eval");
    run_ok(&["eval", "--a", p(&img), "--b", p(&img), "--out", p(&out)]);
    let metrics: toml::Table = std::fs::read_to_string(out.join("metrics.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(metrics["exact_match"].as_bool(), Some(true));
    assert_eq!(metrics["ssim"].as_float(), Some(1.0));
    assert_eq!(metrics["psnr_db"].as_float(), Some(f64::INFINITY));
    assert!(out.join("manifest.toml").exists());
}

#[test]
fn grasp_emits_at_most_top_k_with_flags() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grasp");
    run_ok(&[
        "grasp",
        "--checkpoint",
        p(&f.checkpoint),
        "--layout",
        p(&f.layout),
        "--res",
        "16",
        "--top-k",
        "5",
        "--out",
        p(&out),
    ]);
    let text = std::fs::read_to_string(out.join("grasps.txt")).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(!lines.is_empty() && lines.len() <= 5);
    for l in lines {
        let fields: Vec<&str> = l.split_whitespace().collect();
        assert_eq!(fields.len(), 18);
        assert!(fields[17] == "0" || fields[17] == "1");
        let r: Vec<f64> = fields[5..14].iter().map(|s| s.parse().unwrap()).collect();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[3 * i + k] * r[3 * j + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn renders_and_voxelizes() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "--checkpoint",
        p(&f.checkpoint),
        "--layout",
        p(&f.layout),
        "--width",
        "12",
        "--height",
        "10",
        "--focal",
        "24",
        "--samples",
        "8",
    ];
    for (cmd, file) in [
        ("render", "image.png"),
        ("render-depth", "depth.bin"),
        ("render-graspfield", "graspfield.png"),
    ] {
        let out = dir.path().join(cmd);
        let mut args = vec![cmd, "--out", p(&out)];
        args.extend(base);
        run_ok(&args);
        assert!(out.join(file).exists(), "{cmd} wrote no {file}");
    }
    let depth =
        objfield::image_io::DepthMap::load(&dir.path().join("render-depth/depth.bin")).unwrap();
    assert_eq!((depth.width, depth.height), (12, 10));

    let out = dir.path().join("vox");
    run_ok(&[
        "voxelize",
        "--checkpoint",
        p(&f.checkpoint),
        "--layout",
        p(&f.layout),
        "--res",
        "6",
        "--out",
        p(&out),
    ]);
    let grid =
        objfield::voxel::VoxelGrid::from_bitmap(&std::fs::read(out.join("object_0.vox")).unwrap())
            .unwrap();
    assert_eq!(grid.res, 6);
}

#[test]
fn invert_then_eval_novel_views() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let inv = dir.path().join("inv");
    run_ok(&[
        "invert",
        "--checkpoint",
        p(&f.checkpoint),
        "--data",
        p(&f.data),
        "--scene-name",
        "scene_0002",
        "--mode",
        "latent",
        "--epochs",
        "2",
        "--samples",
        "8",
        "--out",
        p(&inv),
    ]);
    for file in [
        "model.ckpt",
        "layout.toml",
        "invert.log",
        "novel_metrics.toml",
    ] {
        assert!(inv.join(file).exists(), "missing {file}");
    }
    let out = dir.path().join("eval");
    run_ok(&[
        "eval",
        "--checkpoint",
        p(&inv.join("model.ckpt")),
        "--data",
        p(&f.data),
        "--scene-name",
        "scene_0002",
        "--layout",
        p(&inv.join("layout.toml")),
        "--role",
        "novel",
        "--samples",
        "8",
        "--out",
        p(&out),
    ]);
    let metrics: toml::Table = std::fs::read_to_string(out.join("metrics.toml"))
        .unwrap()
        .parse()
        .unwrap();
    let psnr = metrics["mean_psnr_db"].as_float().unwrap();
    assert!(psnr.is_finite() && psnr > 0.0);
}

#[test]
fn exit_codes() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(
        run(&["bench", "--bogus", "--out", p(&out)]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(
        run(&[
            "grasp",
            "--checkpoint",
            "missing.ckpt",
            "--layout",
            p(&f.layout),
            "--out",
            p(&out)
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        run(&[
            "grasp",
            "--checkpoint",
            p(&f.checkpoint),
            "--layout",
            p(&f.layout),
            "--res",
            "1",
            "--out",
            p(&out)
        ])
        .status
        .code(),
        Some(1)
    );
    assert!(!out.exists(), "validation failures must not create --out");

    // A checkpoint that parses as a layout but fails at runtime is not
    // constructible cheaply; a corrupt dataset fails while loading instead.
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join("keep"), "x").unwrap();
    let code = run(&[
        "eval",
        "--a",
        p(&f.layout),
        "--b",
        p(&f.layout),
        "--out",
        p(&out),
    ])
    .status
    .code();
    assert_eq!(code, Some(1));
    assert_eq!(std::fs::read_to_string(out.join("keep")).unwrap(), "x");
}

#[test]
fn outputs_are_write_once_and_inputs_untouched() {
    let f = fixture();
    let before = read_tree(&f.data);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let args = [
        "grasp",
        "--checkpoint",
        p(&f.checkpoint),
        "--layout",
        p(&f.layout),
        "--res",
        "4",
        "--top-k",
        "2",
        "--out",
        p(&out),
    ];
    run_ok(&args);
    let first = read_tree(&out);
    let again = run(&args);
    assert_eq!(again.status.code(), Some(1));
    assert_eq!(read_tree(&out), first);
    assert_eq!(read_tree(&f.data), before);
}

#[test]
fn config_file_is_merged_under_flags() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[grasp]\nres = 4\ntop_k = 3\nt_open = 2.5\n").unwrap();
    let out = dir.path().join("g");
    run_ok(&[
        "grasp",
        "--config",
        p(&cfg),
        "--checkpoint",
        p(&f.checkpoint),
        "--layout",
        p(&f.layout),
        "--top-k",
        "2",
        "--out",
        p(&out),
    ]);
    let manifest: toml::Table = std::fs::read_to_string(out.join("manifest.toml"))
        .unwrap()
        .parse()
        .unwrap();
    let config = manifest["config"].as_table().unwrap();
    assert_eq!(config["res"].as_integer(), Some(4));
    assert_eq!(config["top_k"].as_integer(), Some(2));
    assert_eq!(config["t_open"].as_float(), Some(2.5));
    assert!(manifest["inputs"]
        .as_table()
        .unwrap()
        .contains_key(p(&f.checkpoint)));
    assert!(manifest.contains_key("git_describe"));

    std::fs::write(&cfg, "[grasp]\nresolution = 4\n").unwrap();
    let out = dir.path().join("bad");
    let r = run(&[
        "grasp",
        "--config",
        p(&cfg),
        "--checkpoint",
        p(&f.checkpoint),
        "--layout",
        p(&f.layout),
        "--out",
        p(&out),
    ]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_with_two() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pre");
    let r = run(&[
        "pretrain",
        "--data",
        p(&f.data),
        "--out",
        p(&out),
        "--epochs",
        "100",
        "--max-steps",
        "5",
        "--rays-per-batch",
        "32",
        "--samples",
        "4",
        "--width",
        "8",
        "--latent-dim",
        "4",
        "--lr",
        "1e300",
        "--threads",
        "1",
    ]);
    assert_eq!(
        r.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    assert!(String::from_utf8_lossy(&r.stderr).contains("diverged"));
}
