//! Plain-text corpus format.
//!
//! One directory per domain holding `labeled.tsv`, `unlabeled.tsv` and
//! optionally `dev.tsv` and `test.tsv`. Each line is
//!
//! ```text
//! label<TAB>feature:count feature:count ... [#gold:k]
//! ```
//!
//! `label` is a class index, or `-1` in unlabeled files. A trailing `#gold:k`
//! token records a ground-truth label for an unlabeled example that training
//! never sees.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RawExample {
    pub label: Option<usize>,
    /// Merged and sorted by feature name.
    pub features: Vec<(String, f64)>,
    pub gold: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawDomain {
    pub name: String,
    pub labeled: Vec<RawExample>,
    pub unlabeled: Vec<RawExample>,
    pub dev: Option<Vec<RawExample>>,
    pub test: Option<Vec<RawExample>>,
}

/// Parses one line. Returns the example and the names of features that were
/// repeated on the line (their counts are summed).
pub fn parse_line(line: &str) -> std::result::Result<(RawExample, Vec<String>), String> {
    let (label_str, rest) = line.split_once('\t').unwrap_or((line, ""));
    let label_str = label_str.trim();
    let label: i64 = label_str
        .parse()
        .map_err(|_| format!("label {label_str:?} is not an integer"))?;
    let label = match label {
        -1 => None,
        l if l >= 0 => Some(l as usize),
        l => return Err(format!("label {l} is negative (only -1 marks unlabeled)")),
    };
    let mut feats: BTreeMap<String, f64> = BTreeMap::new();
    let mut dups = Vec::new();
    let mut gold = None;
    for tok in rest.split_whitespace() {
        if let Some(g) = tok.strip_prefix("#gold:") {
            let g: usize = g.parse().map_err(|_| format!("bad gold label in {tok:?}"))?;
            gold = Some(g);
            continue;
        }
        let (name, count) = tok
            .rsplit_once(':')
            .ok_or_else(|| format!("feature {tok:?} lacks ':count'"))?;
        if name.is_empty() {
            return Err(format!("feature {tok:?} has an empty name"));
        }
        let count: f64 = count
            .parse()
            .map_err(|_| format!("count in {tok:?} is not a number"))?;
        if !(count.is_finite() && count >= 0.0) {
            return Err(format!("count in {tok:?} must be finite and non-negative"));
        }
        if let Some(c) = feats.get_mut(name) {
            *c += count;
            dups.push(name.to_string());
        } else {
            feats.insert(name.to_string(), count);
        }
    }
    Ok((
        RawExample {
            label,
            features: feats.into_iter().collect(),
            gold,
        },
        dups,
    ))
}

/// Canonical form: features sorted by name, duplicates merged.
pub fn format_line(ex: &RawExample) -> String {
    let mut s = match ex.label {
        Some(l) => l.to_string(),
        None => "-1".to_string(),
    };
    s.push('\t');
    let feats: Vec<String> = ex.features.iter().map(|(n, c)| format!("{n}:{c}")).collect();
    s.push_str(&feats.join(" "));
    if let Some(g) = ex.gold {
        if !feats.is_empty() {
            s.push(' ');
        }
        s.push_str(&format!("#gold:{g}"));
    }
    s
}

/// Reads one split file. `labeled` demands a class label on every line.
pub fn read_split(path: &Path, labeled: bool) -> Result<Vec<RawExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let (mut ex, dups) = parse_line(line).map_err(parse_err)?;
        if !dups.is_empty() {
            log::warn!(
                "{}:{}: repeated features {:?}; counts summed",
                path.display(),
                i + 1,
                dups
            );
        }
        if labeled && ex.label.is_none() {
            return Err(parse_err("labeled file contains label -1".into()));
        }
        if !labeled {
            // a label in an unlabeled file is ground truth, never a training label
            if ex.gold.is_none() {
                ex.gold = ex.label;
            }
            ex.label = None;
        }
        out.push(ex);
    }
    Ok(out)
}

fn optional(dir: &Path, name: &str) -> Result<Option<Vec<RawExample>>> {
    let p = dir.join(name);
    if p.exists() {
        Ok(Some(read_split(&p, true)?))
    } else {
        Ok(None)
    }
}

/// Loads every domain subdirectory of `dir`, ordered by name.
pub fn load_corpus(dir: &Path) -> Result<Vec<RawDomain>> {
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(Error::Data(format!("{} has no domain directories", dir.display())));
    }
    subdirs
        .iter()
        .map(|d| {
            let name = d
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(RawDomain {
                labeled: read_split(&d.join("labeled.tsv"), true)?,
                unlabeled: read_split(&d.join("unlabeled.tsv"), false)?,
                dev: optional(d, "dev.tsv")?,
                test: optional(d, "test.tsv")?,
                name,
            })
        })
        .collect()
}

fn write_split(path: &Path, examples: &[RawExample]) -> Result<()> {
    let mut s = String::new();
    for ex in examples {
        s.push_str(&format_line(ex));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Writes `domains` in canonical form under `dir`.
pub fn write_corpus(dir: &Path, domains: &[RawDomain]) -> Result<()> {
    for d in domains {
        let sub = dir.join(&d.name);
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        write_split(&sub.join("labeled.tsv"), &d.labeled)?;
        write_split(&sub.join("unlabeled.tsv"), &d.unlabeled)?;
        if let Some(dev) = &d.dev {
            write_split(&sub.join("dev.tsv"), dev)?;
        }
        if let Some(test) = &d.test {
            write_split(&sub.join("test.tsv"), test)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_format_example() {
        let (ex, dups) = parse_line("1\tgood:2 not_bad:1").unwrap();
        assert_eq!(ex.label, Some(1));
        assert_eq!(ex.features, vec![("good".into(), 2.0), ("not_bad".into(), 1.0)]);
        assert!(dups.is_empty());
    }

    #[test]
    fn duplicates_are_summed() {
        let (ex, dups) = parse_line("0\ta:1 b:2 a:3").unwrap();
        assert_eq!(ex.features, vec![("a".into(), 4.0), ("b".into(), 2.0)]);
        assert_eq!(dups, vec!["a".to_string()]);
    }

    #[test]
    fn gold_and_unlabeled() {
        let (ex, _) = parse_line("-1\tx:1 #gold:1").unwrap();
        assert_eq!((ex.label, ex.gold), (None, Some(1)));
        assert_eq!(format_line(&ex), "-1\tx:1 #gold:1");
    }

    #[test]
    fn malformed_lines_report_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labeled.tsv");
        fs::write(&p, "1\ta:1\n0\tb:oops\n").unwrap();
        let e = read_split(&p, true).unwrap_err();
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(e_display(&p).contains("labeled.tsv:2"));
    }

    fn e_display(p: &Path) -> String {
        read_split(p, true).unwrap_err().to_string()
    }

    #[test]
    fn empty_unlabeled_file_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("unlabeled.tsv");
        fs::write(&p, "").unwrap();
        assert!(read_split(&p, false).unwrap().is_empty());
    }

    #[test]
    fn reserialization_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src/books");
        fs::create_dir_all(&src).unwrap();
        fs::write(src.join("labeled.tsv"), "1\tz:1 a:2 z:1\n0\t\n").unwrap();
        fs::write(src.join("unlabeled.tsv"), "-1\tq:1.5 #gold:0\n1\tb:1\n").unwrap();
        let once = load_corpus(&dir.path().join("src")).unwrap();
        write_corpus(&dir.path().join("a"), &once).unwrap();
        let twice = load_corpus(&dir.path().join("a")).unwrap();
        assert_eq!(once, twice);
        write_corpus(&dir.path().join("b"), &twice).unwrap();
        for f in ["labeled.tsv", "unlabeled.tsv"] {
            assert_eq!(
                fs::read(dir.path().join("a/books").join(f)).unwrap(),
                fs::read(dir.path().join("b/books").join(f)).unwrap()
            );
        }
        assert_eq!(twice[0].unlabeled[1].gold, Some(1));
    }
}
