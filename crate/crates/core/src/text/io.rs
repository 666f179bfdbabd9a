use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, Label, TextPair};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairFormat {
    Tsv,
    Jsonl,
}

impl PairFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "tsv" => Some(PairFormat::Tsv),
            "jsonl" => Some(PairFormat::Jsonl),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedPairs {
    pub pairs: Vec<TextPair>,
    pub skipped: usize,
}

#[derive(Deserialize)]
struct JsonPair {
    s1: String,
    s2: String,
    label: u8,
}

#[derive(Serialize)]
struct JsonPairOut<'a> {
    s1: &'a str,
    s2: &'a str,
    label: u8,
}

fn parse_tsv(line: &str) -> Option<TextPair> {
    let mut cols = line.split('\t');
    let (s1, s2, label) = (cols.next()?, cols.next()?, cols.next()?);
    if cols.next().is_some() {
        return None;
    }
    let label = Label::from_flag(label.trim().parse().ok()?)?;
    Some(TextPair::new(s1, s2, label))
}

fn parse_jsonl(line: &str) -> Option<TextPair> {
    let p: JsonPair = serde_json::from_str(line).ok()?;
    Some(TextPair::new(p.s1, p.s2, Label::from_flag(p.label)?))
}

/// Read a pair file. Malformed lines are skipped and counted; more than half
/// malformed is an error. Blank lines are ignored.
pub fn load_pairs(path: impl AsRef<Path>, format: PairFormat) -> Result<LoadedPairs> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for line in content.lines().filter(|l| !l.trim().is_empty()) {
        let parsed = match format {
            PairFormat::Tsv => parse_tsv(line),
            PairFormat::Jsonl => parse_jsonl(line),
        };
        match parsed.filter(|p| !tokenize(&p.s1).is_empty() && !tokenize(&p.s2).is_empty()) {
            Some(p) => pairs.push(p),
            None => skipped += 1,
        }
    }
    let total = pairs.len() + skipped;
    if total > 0 && skipped * 2 > total {
        return Err(Error::Data {
            path: path.to_path_buf(),
            reason: format!("{skipped} of {total} lines malformed"),
        });
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} malformed line(s) of {total}", path.display());
    }
    Ok(LoadedPairs { pairs, skipped })
}

pub fn write_pairs_tsv(path: impl AsRef<Path>, pairs: &[TextPair]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for p in pairs {
        writeln!(w, "{}\t{}\t{}", p.s1, p.s2, p.label.flag())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pairs_jsonl(path: impl AsRef<Path>, pairs: &[TextPair]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for p in pairs {
        let rec = JsonPairOut {
            s1: &p.s1,
            s2: &p.s2,
            label: p.label.flag(),
        };
        writeln!(w, "{}", serde_json::to_string(&rec)?)?;
    }
    w.flush()?;
    Ok(())
}

/// One sentence per line; blank lines are dropped.
pub fn load_sentences(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(content
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(String::from)
        .collect())
}

pub fn write_sentences(path: impl AsRef<Path>, sentences: &[String]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for s in sentences {
        writeln!(w, "{s}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn reads_well_formed_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.tsv", "how far is earth from sun\twhat is the distance between sun and earth\t1\nhow can i learn rust\twhy should i learn rust\t0\n");
        let got = load_pairs(&p, PairFormat::Tsv).unwrap();
        assert_eq!(got.skipped, 0);
        assert_eq!(got.pairs.len(), 2);
        assert_eq!(got.pairs[0].label, Label::Positive);
        assert_eq!(got.pairs[1].label, Label::Negative);
    }

    #[test]
    fn skips_line_missing_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.tsv", "a b\tc d\t1\ne f\tg h\n i j\tk l\t0\n");
        let got = load_pairs(&p, PairFormat::Tsv).unwrap();
        assert_eq!(got.skipped, 1);
        assert_eq!(got.pairs.len(), 2);
    }

    #[test]
    fn mostly_malformed_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.jsonl", "{\"s1\":\"a\",\"s2\":\"b\",\"label\":1}\nnope\n{\"s1\":\"a\"}\n");
        assert!(load_pairs(&p, PairFormat::Jsonl).is_err());
        assert!(load_pairs(dir.path().join("missing.tsv"), PairFormat::Tsv).is_err());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(PairFormat::from_path(Path::new("x.tsv")), Some(PairFormat::Tsv));
        assert_eq!(PairFormat::from_path(Path::new("x.jsonl")), Some(PairFormat::Jsonl));
        assert_eq!(PairFormat::from_path(Path::new("x.csv")), None);
    }
}
