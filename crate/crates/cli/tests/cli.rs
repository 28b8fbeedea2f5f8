use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crftk_cli::{tag, train, TrainOptions};
use crftk_core::{
    load_model, save_model, FeatureIndex, LabelAlphabet, Model, ModelKind, Templates,
};

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn crftk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crftk"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn accuracy(tagged: &str) -> f64 {
    let rows: Vec<Vec<&str>> = tagged
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split('\t').collect())
        .collect();
    let right = rows.iter().filter(|r| r[2] == r[3]).count();
    right as f64 / rows.len() as f64
}

#[test]
fn train_then_tag_fits_separable_chains() {
    let dir = tempfile::tempdir().unwrap();
    let model = path(&dir, "m.crf");
    let out = crftk(&[
        "train",
        &fixture("reviews.tsv"),
        "--model",
        &model,
        "--kind",
        "chain1",
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));
    let saved = std::fs::read_to_string(&model).unwrap();
    let loaded = load_model(&saved).unwrap();
    assert_eq!(loaded.alphabet().labels(), ["NON", "SNT", "SRC", "TRG"]);
    assert_eq!(loaded.alphabet().background(), Some(0));

    let tagged = stdout(&crftk(&["tag", &fixture("reviews.tsv"), "--model", &model]));
    assert_eq!(accuracy(&tagged), 1.0);

    // tagged output evaluates against its own gold column
    let pred = path(&dir, "pred.tsv");
    std::fs::write(&pred, &tagged).unwrap();
    let report = stdout(&crftk(&["eval", &fixture("reviews.tsv"), &pred]));
    for line in report.lines().skip(1) {
        for v in line.split('\t').skip(1) {
            assert_eq!(v, "1.0000", "{report}");
        }
    }
}

#[test]
fn two_chain_file_gives_its_label_set() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(&dir, "tiny.tsv");
    std::fs::write(
        &data,
        "Aber\tw=aber\tKON\nes\tw=es\tPPER\n\nes\tw=es\tPPER\nAber\tw=aber\tKON\n",
    )
    .unwrap();
    let model = path(&dir, "m.crf");
    let out = crftk(&[
        "train", &data, "-m", &model, "--kind", "chainK", "--order", "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m = load_model(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(m.alphabet().labels(), ["KON", "PPER"]);
    assert_eq!(m.kind(), ModelKind::ChainK);
    assert_eq!(m.index().order(), 2);
}

#[test]
fn usage_errors_exit_with_two() {
    let out = crftk(&["train", &fixture("reviews.tsv"), "-m", "x", "--kind", "hmm"]);
    assert_eq!(out.status.code(), Some(2));
    let out = crftk(&[
        "train",
        &fixture("reviews.tsv"),
        "-m",
        "x",
        "--kind",
        "tree",
        "--format",
        "chain",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(crftk(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let out = crftk(&["tag", &fixture("reviews.tsv"), "-m", "/nonexistent/model"]);
    assert_eq!(out.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let bad = path(&dir, "bad.tsv");
    std::fs::write(&bad, "a\tw=a\tX\nlonely\n").unwrap();
    let out = crftk(&["train", &bad, "-m", &path(&dir, "m"), "--kind", "chain1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.tsv:2:"));
}

#[test]
fn zero_weight_model_tags_lowest_label() {
    let dir = tempfile::tempdir().unwrap();
    let alphabet = LabelAlphabet::new(["B", "A", "C"]).unwrap();
    let index = FeatureIndex::from_keys(3, Templates::chain(1), 0, 2, []).unwrap();
    let model = Model::new(ModelKind::Chain1, alphabet, index, vec![]).unwrap();
    let file = path(&dir, "zero.crf");
    std::fs::write(&file, save_model(&model).unwrap()).unwrap();
    let data = path(&dir, "in.tsv");
    std::fs::write(&data, "x\tw=x\ny\tw=y\n\nz\t\n").unwrap();
    let tagged = stdout(&crftk(&["tag", &data, "-m", &file]));
    assert_eq!(tagged, "x\tw=x\tB\ny\tw=y\tB\n\nz\t\tB\n");
}

#[test]
fn unknown_gold_label_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let model = path(&dir, "m.crf");
    assert!(crftk(&[
        "train",
        &fixture("reviews.tsv"),
        "-m",
        &model,
        "--kind",
        "chain1"
    ])
    .status
    .success());
    let data = path(&dir, "other.tsv");
    std::fs::write(&data, "the\tw=the\tNON\nfoo\tw=foo\tQQQ\n").unwrap();
    let out = crftk(&["tag", &data, "-m", &model]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("`QQQ`") && err.contains("other.tsv:2"),
        "{err}"
    );
}

#[test]
fn agreement_table_for_nested_spans() {
    let run = |mode: &str| {
        stdout(&crftk(&[
            "agree",
            &fixture("ann1.spans"),
            &fixture("ann2.spans"),
            "--size",
            "7",
            "--mode",
            mode,
        ]))
    };
    assert_eq!(
        run("binary"),
        "Element\tM1\tA1\tM2\tA2\tκ\nSNT\t10\t10\t9\t9\t1.0000\n"
    );
    assert_eq!(
        run("proportional"),
        "Element\tM1\tA1\tM2\tA2\tκ\nSNT\t6\t7\t6\t6\t0.0000\n"
    );
    let out = crftk(&[
        "agree",
        &fixture("ann1.spans"),
        &fixture("ann2.spans"),
        "--size",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn segment_model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = path(&dir, "sm.crf");
    let out = crftk(&[
        "train",
        &fixture("reviews.tsv"),
        "-m",
        &model,
        "--kind",
        "semimarkov",
        "--max-seg-len",
        "6",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let tagged = stdout(&crftk(&["tag", &fixture("reviews.tsv"), "-m", &model]));
    assert!(accuracy(&tagged) > 0.95);
}

#[test]
fn tree_kinds_train_and_tag() {
    let dir = tempfile::tempdir().unwrap();
    // fully labeled trees for the supervised kind
    let labeled = std::fs::read_to_string(fixture("opinions.tree"))
        .unwrap()
        .lines()
        .map(|l| match l.split('\t').nth(3) {
            Some(feats) if l.ends_with("\t_") => {
                let dense: Vec<f64> = feats
                    .trim_start_matches("dense:")
                    .split('|')
                    .next()
                    .unwrap()
                    .split(',')
                    .map(|v| v.parse().unwrap())
                    .collect();
                let top = (0..3)
                    .max_by(|&a, &b| dense[a].partial_cmp(&dense[b]).unwrap())
                    .unwrap();
                format!("{}{}", l.trim_end_matches('_'), ["NEG", "NEU", "POS"][top])
            }
            _ => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n");
    let data = path(&dir, "full.tree");
    std::fs::write(&data, &labeled).unwrap();
    let model = path(&dir, "t.crf");
    assert!(crftk(&[
        "train",
        &data,
        "-m",
        &model,
        "--kind",
        "tree",
        "--min-count",
        "1"
    ])
    .status
    .success());
    let tagged = stdout(&crftk(&["tag", &data, "-m", &model]));
    assert_eq!(
        tagged.lines().filter(|l| !l.is_empty()).count(),
        labeled.lines().filter(|l| !l.is_empty()).count()
    );
    let pred = path(&dir, "pred.tree");
    std::fs::write(&pred, &tagged).unwrap();
    let report = stdout(&crftk(&[
        "eval", &data, &pred, "--format", "tree", "--pos", "POS", "--neg", "NEG",
    ]));
    let micro: f64 = report
        .lines()
        .last()
        .unwrap()
        .split('\t')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(micro > 0.9, "{report}");

    for kind in ["latent", "latentmarg"] {
        let model = path(&dir, &format!("{kind}.crf"));
        let out = crftk(&[
            "train",
            &fixture("opinions.tree"),
            "-m",
            &model,
            "--kind",
            kind,
            "--epochs",
            "50",
            "--min-count",
            "1",
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let tagged = stdout(&crftk(&["tag", &fixture("opinions.tree"), "-m", &model]));
        let roots: Vec<Vec<&str>> = tagged
            .lines()
            .filter(|l| l.starts_with("1\t0\t"))
            .map(|l| l.split('\t').collect())
            .collect();
        let right = roots.iter().filter(|r| r[4] == r[5]).count();
        assert!(
            right as f64 >= 0.9 * roots.len() as f64,
            "{kind}: {right}/{}",
            roots.len()
        );
    }
}

#[test]
fn library_round_trip_matches_in_memory_tagging() {
    let text = std::fs::read_to_string(fixture("reviews.tsv")).unwrap();
    let outcome = train(&text, "reviews.tsv", &TrainOptions::default()).unwrap();
    let direct = tag(&outcome.model, &text, "reviews.tsv").unwrap();
    let saved = save_model(&outcome.model).unwrap();
    let reloaded = load_model(&saved).unwrap();
    assert_eq!(tag(&reloaded, &text, "reviews.tsv").unwrap(), direct);
    assert_eq!(save_model(&reloaded).unwrap(), saved);
}

#[test]
fn repeated_training_writes_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<PathBuf> = (0..2)
        .map(|i| {
            let model = path(&dir, &format!("m{i}.crf"));
            assert!(crftk(&[
                "train",
                &fixture("opinions.tree"),
                "-m",
                &model,
                "--kind",
                "latentmarg",
                "--epochs",
                "5"
            ])
            .status
            .success());
            PathBuf::from(model)
        })
        .collect();
    assert_eq!(
        std::fs::read(&files[0]).unwrap(),
        std::fs::read(&files[1]).unwrap()
    );
}
