//! Every command run twice with the same seed on one thread produces
//! byte-identical output directories.

mod common;

use common::{fixture, p, read_tree, run_ok};

fn twice(args: &[&str]) {
    let dir = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let mut full = args.to_vec();
        full.extend(["--out", p(&out), "--threads", "1", "--seed", "11"]);
        run_ok(&full);
        let mut tree = read_tree(&out);
        // Wall-clock timings are the one output allowed to differ.
        tree.remove("bench.toml");
        trees.push(tree);
    }
    assert!(trees[0].len() > 1, "{args:?} produced no outputs");
    assert_eq!(
        trees[0].keys().collect::<Vec<_>>(),
        trees[1].keys().collect::<Vec<_>>()
    );
    for (name, bytes) in &trees[0] {
        assert!(
            &trees[1][name] == bytes,
            "{args:?}: {name} differs between runs"
        );
    }
}

#[test]
fn every_command_is_reproducible() {
    let f = fixture();
    let ck = p(&f.checkpoint);
    let layout = p(&f.layout);
    let data = p(&f.data);
    let image = f.data.join("scene_0000").join("view_001.png");
    let other = f.data.join("scene_0000").join("view_002.png");
    let camera = [
        "--width",
        "12",
        "--height",
        "12",
        "--focal",
        "24",
        "--samples",
        "8",
    ];

    twice(&[
        "gen-data",
        "--train-objects",
        "1",
        "--test-objects",
        "1",
        "--multi-object-scenes",
        "1",
        "--views",
        "2",
        "--held-out-views",
        "1",
        "--novel-views",
        "1",
        "--width",
        "12",
        "--height",
        "12",
        "--focal",
        "24",
        "--grasps-per-object",
        "10",
        "--perturbations",
        "4",
        "--oracle-samples",
        "32",
    ]);
    twice(&[
        "pretrain",
        "--data",
        data,
        "--epochs",
        "100",
        "--max-steps",
        "4",
        "--rays-per-batch",
        "32",
        "--grasps-per-batch",
        "8",
        "--samples",
        "8",
        "--width",
        "8",
        "--latent-dim",
        "4",
    ]);
    twice(&[
        "invert",
        "--checkpoint",
        ck,
        "--data",
        data,
        "--scene-name",
        "scene_0002",
        "--mode",
        "both",
        "--epochs",
        "2",
        "--samples",
        "8",
    ]);
    for cmd in ["render", "render-depth", "render-graspfield"] {
        let mut args = vec![cmd, "--checkpoint", ck, "--layout", layout, "--jitter"];
        args.extend(camera);
        twice(&args);
    }
    twice(&[
        "grasp",
        "--checkpoint",
        ck,
        "--layout",
        layout,
        "--res",
        "6",
        "--top-k",
        "3",
    ]);
    twice(&[
        "voxelize",
        "--checkpoint",
        ck,
        "--layout",
        layout,
        "--res",
        "6",
    ]);
    twice(&[
        "voxelize",
        "--checkpoint",
        ck,
        "--layout",
        layout,
        "--res",
        "5",
        "--bounds",
        "-0.2,-0.2,-0.2,0.2,0.2,0.2",
    ]);
    twice(&["eval", "--a", p(&image), "--b", p(&other)]);
    twice(&["eval", "--checkpoint", ck, "--data", data, "--samples", "8"]);
    twice(&[
        "bench",
        "--width",
        "16",
        "--height",
        "16",
        "--iterations",
        "2",
        "--warmup",
        "0",
    ]);
}
