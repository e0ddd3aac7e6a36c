//! End-to-end checks of the `donor-qubit` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use donor_qubit::experiments::{run_in_memory, Manifest};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_donor-qubit"));
    c.env_remove("DONOR_QUBIT_THREADS").env_remove("RUST_LOG");
    c
}

struct Scratch(PathBuf);

impl Scratch {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("dq-cli-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        Scratch(dir)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.0.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn splitting_manifest(out: &Path) -> String {
    format!(
        "kind = \"splitting-curve\"\noutput = \"{}\"\n\n[params]\nb0 = \"0.2 T\"\n\n[grid]\nstart = \"-2e4 V/m\"\nstop = \"2e4 V/m\"\npoints = 21\n",
        out.display()
    )
}

#[test]
fn list_experiments_names_every_kind() {
    let o = bin().arg("list-experiments").output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    for k in [
        "splitting-curve",
        "rz-angle-curve",
        "rz-noise",
        "rx-noise",
        "sweep-echo-noise",
        "cphase-curve",
        "hprime",
    ] {
        assert!(text.contains(k), "missing {k} in\n{text}");
    }
}

#[test]
fn validate_accepts_a_good_manifest() {
    let s = Scratch::new("ok");
    let m = s.write("m.toml", &splitting_manifest(&s.path("o.dat")));
    let o = bin().arg("validate").arg(&m).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ok: splitting-curve"));
    assert!(!s.path("o.dat").exists(), "validate must not run the experiment");
}

#[test]
fn validate_names_the_bad_field_and_exits_with_two() {
    let s = Scratch::new("bad");
    let cases = [
        (
            "unitless.toml",
            "kind = \"splitting-curve\"\noutput = \"x\"\n[params]\nb0 = 0.2\n",
            "b0",
        ),
        (
            "unknown.toml",
            "kind = \"splitting-curve\"\noutput = \"x\"\n[params]\nbee = \"1 T\"\n",
            "bee",
        ),
        ("kind.toml", "kind = \"teleport\"\noutput = \"x\"\n", "kind"),
        (
            "unused.toml",
            "kind = \"splitting-curve\"\noutput = \"x\"\n[noise]\nsigma = [\"1 V/m\"]\nsamples = 3\n",
            "noise",
        ),
        (
            "dim.toml",
            "kind = \"rz-noise\"\noutput = \"x\"\n[noise]\nsigma = [\"1 T\"]\n",
            "sigma",
        ),
    ];
    for (name, text, field) in cases {
        let m = s.write(name, text);
        let o = bin().arg("validate").arg(&m).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
        assert!(
            stderr(&o).contains(field),
            "{name}: `{}` does not mention {field}",
            stderr(&o)
        );
    }
}

#[test]
fn missing_manifest_is_an_io_error() {
    let o = bin().args(["validate", "/no/such/manifest.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn reruns_are_byte_identical_and_headers_reproduce_the_run() {
    let s = Scratch::new("rerun");
    let out = s.path("curve.dat");
    let m = s.write("m.toml", &splitting_manifest(&out));
    let run = || {
        let o = bin().arg("run").arg(&m).output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(&out).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);

    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# donor-qubit "));
    assert!(text.contains("# columns: dE_V_per_m dq_exact_MHz dq_approx_MHz"));
    let restored = Manifest::from_output_header(&text).unwrap();
    assert_eq!(run_in_memory(&restored).unwrap().rendered, text);
}

#[test]
fn thread_count_does_not_change_the_output() {
    let s = Scratch::new("threads");
    let text = format!(
        "kind = \"rz-noise\"\noutput = \"{}\"\nseed = 3\n[noise]\nsigma = [\"100 V/m\"]\nsamples = 16\n[grid]\nvalues = [\"-1 pi\"]\n",
        s.path("out.dat").display()
    );
    let m = s.write("m.toml", &text);
    let run = |threads: &str| {
        let o = bin()
            .env("DONOR_QUBIT_THREADS", threads)
            .arg("run")
            .arg(&m)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(s.path("out.dat")).unwrap()
    };
    assert_eq!(run("1"), run("4"));

    // --output redirects the file and is recorded in the header
    let o = bin()
        .arg("run")
        .arg(&m)
        .arg("--output")
        .arg(s.path("moved.dat"))
        .output()
        .unwrap();
    assert!(o.status.success());
    let moved = std::fs::read_to_string(s.path("moved.dat")).unwrap();
    assert!(moved.contains("moved.dat"));

    let bad = bin()
        .env("DONOR_QUBIT_THREADS", "zero")
        .arg("run")
        .arg(&m)
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("DONOR_QUBIT_THREADS"));
}

#[test]
fn dump_hprime_reports_the_idle_flip_flop_pair() {
    let o = bin().arg("dump-hprime").output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let line = text
        .lines()
        .find(|l| l.starts_with("# dominant_offdiagonal"))
        .unwrap_or_else(|| panic!("no dominant coupling line in\n{text}"));
    assert!(line.contains("g↑⇓") && line.contains("e↓⇑"), "{line}");
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 64);
}

#[test]
fn dump_hprime_rejects_unitless_fields() {
    let o = bin().args(["dump-hprime", "--de", "1000"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("de"));
}
