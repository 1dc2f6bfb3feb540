//! Compile success rate via an external LaTeX compiler.

use std::fs;
use std::io;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::Serialize;

/// Fixed wrapper document, pinned so results are stable across machines
/// running the same compiler.
pub const PREAMBLE: &str = "\\documentclass{article}\n\\pagestyle{empty}\n\\begin{document}\n";
pub const POSTAMBLE: &str = "\n\\end{document}\n";

/// Wraps one sample in the pinned document; environments go in as text,
/// bare expressions in math mode.
pub fn wrap_sample(latex: &str) -> String {
    if latex.contains("\\begin{") {
        format!("{PREAMBLE}{latex}{POSTAMBLE}")
    } else {
        format!("{PREAMBLE}${latex}${POSTAMBLE}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CsrSample {
    pub id: String,
    pub compiled: bool,
    /// Relative log path under the work directory.
    pub log: String,
    /// Tail of the compiler output, or the failure reason.
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CsrOutcome {
    /// Fraction of samples that compiled; absent when the compiler is
    /// unavailable, never silently 0.
    pub value: Option<f64>,
    pub compiled: usize,
    pub total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unavailable_reason: Option<String>,
    pub samples: Vec<CsrSample>,
}

fn unavailable(total: usize, reason: String) -> CsrOutcome {
    CsrOutcome { value: None, compiled: 0, total, unavailable_reason: Some(reason), samples: Vec::new() }
}

fn tail(text: &str, max: usize) -> String {
    let trimmed = text.trim();
    match trimmed.char_indices().nth_back(max.saturating_sub(1)) {
        Some((at, _)) if at > 0 => trimmed[at..].to_string(),
        _ => trimmed.to_string(),
    }
}

/// Compiles each `(id, latex)` sample with `compiler_command` (program
/// plus leading arguments; the .tex path is appended) inside `workdir`,
/// one subdirectory per sample, logs retained. A missing compiler makes
/// the whole metric unavailable. IO errors on the workdir itself bubble
/// up; compiler failures only mark their sample.
pub fn csr(
    samples: &[(String, String)],
    compiler_command: &str,
    timeout: Duration,
    workdir: &Path,
) -> io::Result<CsrOutcome> {
    let mut words = compiler_command.split_whitespace();
    let Some(program) = words.next() else {
        return Ok(unavailable(samples.len(), "empty compiler command".to_string()));
    };
    let base_args: Vec<&str> = words.collect();
    if samples.is_empty() {
        return Ok(unavailable(0, "no samples".to_string()));
    }
    let mut out_samples = Vec::with_capacity(samples.len());
    let mut compiled = 0usize;
    for (i, (id, latex)) in samples.iter().enumerate() {
        let rel = format!("s{i:03}");
        let dir = workdir.join(&rel);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("doc.tex"), wrap_sample(latex))?;
        let log_path = dir.join("compile.log");
        let log_file = fs::File::create(&log_path)?;
        let spawned = Command::new(program)
            .args(&base_args)
            .arg("doc.tex")
            .current_dir(&dir)
            .stdin(Stdio::null())
            .stdout(log_file.try_clone()?)
            .stderr(log_file)
            .spawn();
        let mut child = match spawned {
            Ok(child) => child,
            Err(err) => {
                // First spawn failure means the command itself is broken,
                // not the sample.
                return Ok(unavailable(
                    samples.len(),
                    format!("cannot run compiler {program:?}: {err}"),
                ));
            }
        };
        let deadline = Instant::now() + timeout;
        let status = loop {
            match child.try_wait()? {
                Some(status) => break Some(status),
                None if Instant::now() >= deadline => {
                    child.kill().ok();
                    child.wait().ok();
                    break None;
                }
                None => std::thread::sleep(Duration::from_millis(5)),
            }
        };
        let log_text = fs::read_to_string(&log_path).unwrap_or_default();
        let (ok, detail) = match status {
            Some(s) if s.success() => (true, tail(&log_text, 200)),
            Some(s) => (false, format!("exit {:?}: {}", s.code(), tail(&log_text, 200))),
            None => (false, format!("timeout after {:.1}s", timeout.as_secs_f64())),
        };
        compiled += usize::from(ok);
        out_samples.push(CsrSample {
            id: id.clone(),
            compiled: ok,
            log: format!("{rel}/compile.log"),
            detail,
        });
    }
    Ok(CsrOutcome {
        value: Some(compiled as f64 / samples.len() as f64),
        compiled,
        total: samples.len(),
        unavailable_reason: None,
        samples: out_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::os::unix::fs::PermissionsExt;

    fn write_script(dir: &Path, name: &str, body: &str) -> String {
        let path = dir.join(name);
        fs::write(&path, body).unwrap();
        fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
        path.to_string_lossy().into_owned()
    }

    /// Counts braces like the checked-in fixture compiler.
    const BALANCE_SH: &str = "#!/bin/sh\nopens=$(tr -cd '{' < \"$1\" | wc -c)\ncloses=$(tr -cd '}' < \"$1\" | wc -c)\n[ \"$opens\" -eq \"$closes\" ] || { echo unbalanced; exit 1; }\necho ok\n";

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn stub_compiler_scores_the_balanced_fraction() {
        let tmp = tempfile::tempdir().unwrap();
        let compiler = write_script(tmp.path(), "stub.sh", BALANCE_SH);
        let samples = pairs(&[("good", "x^2"), ("bad", "\\frac{a}{"), ("fine", "{y}")]);
        let outcome = csr(&samples, &compiler, Duration::from_secs(5), tmp.path()).unwrap();
        assert_eq!(outcome.value, Some(2.0 / 3.0));
        assert_eq!(outcome.compiled, 2);
        let flags: Vec<bool> = outcome.samples.iter().map(|s| s.compiled).collect();
        assert_eq!(flags, [true, false, true]);
        assert!(outcome.samples[1].detail.contains("unbalanced"));
        // Logs stay on disk for inspection.
        assert!(tmp.path().join(&outcome.samples[0].log).is_file());
    }

    #[test]
    fn missing_compiler_reports_unavailable_not_zero() {
        let tmp = tempfile::tempdir().unwrap();
        let samples = pairs(&[("a", "x")]);
        let outcome =
            csr(&samples, "definitely-not-a-tex-compiler", Duration::from_secs(1), tmp.path())
                .unwrap();
        assert_eq!(outcome.value, None);
        assert!(outcome.unavailable_reason.unwrap().contains("definitely-not-a-tex-compiler"));
    }

    #[test]
    fn hung_compiler_times_out_as_a_failure() {
        let tmp = tempfile::tempdir().unwrap();
        let compiler = write_script(tmp.path(), "hang.sh", "#!/bin/sh\nsleep 5\n");
        let samples = pairs(&[("slow", "x")]);
        let outcome = csr(&samples, &compiler, Duration::from_millis(150), tmp.path()).unwrap();
        assert_eq!(outcome.value, Some(0.0));
        assert!(outcome.samples[0].detail.contains("timeout"));
    }

    #[test]
    fn environments_skip_the_math_wrapper() {
        assert!(wrap_sample("x^2").contains("$x^2$"));
        let wrapped = wrap_sample("\\begin{tabular}{c} a \\end{tabular}");
        assert!(!wrapped.contains('$'));
        assert!(wrapped.starts_with(PREAMBLE));
    }
}
