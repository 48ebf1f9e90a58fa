//! Line-based TSV model files.
//!
//! | model           | header                                | record                 |
//! |-----------------|---------------------------------------|------------------------|
//! | [`ChunkStore`]  | `morphseg-mdl v1 char_bits=<k>`       | `text\tsplit\tcount`   |
//! | [`MorphStats`]  | `morphseg-ml v1 total=<N>`            | `morph\tcount`         |
//! | [`DistanceTable`] | `morphseg-dist v1 d_max=<bits>`     | `morph\tlabel\tbits`   |
//! | [`Segmentation`] | none                                 | `word\tmorph1 morph2 ...` |
//!
//! Records are sorted, every line ends with LF, and floats are written in
//! their shortest round-trip form, so equal models give identical bytes.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::DistanceTable;
use crate::mdl::ChunkStore;
use crate::ml::{MorphStats, Segmentation};

pub const MDL_FORMAT: &str = "morphseg-mdl";
pub const ML_FORMAT: &str = "morphseg-ml";
pub const DISTANCE_FORMAT: &str = "morphseg-dist";
pub const VERSION: &str = "v1";

pub trait ModelFile: Sized {
    fn to_text(&self) -> String;
    fn from_text(text: &str) -> Result<Self>;

    fn write_to<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&read_text(path.as_ref())?)
    }
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    String::from_utf8(bytes).map_err(|_| Error::Input(format!("{} is not valid UTF-8", path.display())))
}

/// Complete LF-terminated lines, numbered from 1.
fn lines(text: &str) -> Result<impl Iterator<Item = (usize, &str)>> {
    if text.is_empty() {
        return Err(Error::Truncated("file is empty".into()));
    }
    if !text.ends_with('\n') {
        return Err(Error::Truncated("last line is incomplete".into()));
    }
    Ok(text[..text.len() - 1].split('\n').enumerate().map(|(i, l)| (i + 1, l)))
}

/// Checks `format version key=value` and returns the value.
fn parse_header<'a>(line: &'a str, format: &str, key: &str) -> Result<&'a str> {
    let mut parts = line.split(' ');
    let (Some(id), Some(version), Some(param), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return Err(Error::Version(line.to_string()));
    };
    if id != format || version != VERSION {
        return Err(Error::Version(line.to_string()));
    }
    param
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| Error::parse(1, format!("expected {key}=<value> in header")))
}

fn field<T: FromStr>(value: &str, line: usize, what: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} {value:?}")))
}

fn split_fields(line: &str, lineno: usize, n: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != n || fields.iter().any(|f| f.is_empty()) {
        return Err(Error::parse(lineno, format!("expected {n} tab-separated fields")));
    }
    Ok(fields)
}

impl ModelFile for ChunkStore {
    fn to_text(&self) -> String {
        let mut chunks: Vec<_> = self.chunks().collect();
        chunks.sort_unstable_by_key(|&(t, _)| t);
        let mut out = format!("{MDL_FORMAT} {VERSION} char_bits={}\n", self.char_bits());
        for (text, chunk) in chunks {
            out.push_str(&format!("{text}\t{}\t{}\n", chunk.split, chunk.count));
        }
        out
    }

    fn from_text(text: &str) -> Result<Self> {
        let mut lines = lines(text)?;
        let (_, header) = lines.next().unwrap();
        let char_bits: u32 = field(parse_header(header, MDL_FORMAT, "char_bits")?, 1, "char_bits")?;
        let mut records = Vec::new();
        for (lineno, line) in lines {
            let f = split_fields(line, lineno, 3)?;
            records.push((
                f[0].to_string(),
                field(f[1], lineno, "split")?,
                field(f[2], lineno, "count")?,
            ));
        }
        ChunkStore::from_chunks(char_bits, records).map_err(|e| Error::Input(format!("inconsistent chunk store: {e}")))
    }
}

impl ModelFile for MorphStats {
    fn to_text(&self) -> String {
        let mut counts: Vec<_> = self.counts().iter().collect();
        counts.sort_unstable();
        let mut out = format!("{ML_FORMAT} {VERSION} total={}\n", self.total());
        for (morph, count) in counts {
            out.push_str(&format!("{morph}\t{count}\n"));
        }
        out
    }

    fn from_text(text: &str) -> Result<Self> {
        let mut lines = lines(text)?;
        let (_, header) = lines.next().unwrap();
        let total: u64 = field(parse_header(header, ML_FORMAT, "total")?, 1, "total")?;
        let mut counts = Vec::new();
        for (lineno, line) in lines {
            let f = split_fields(line, lineno, 2)?;
            let count: u64 = field(f[1], lineno, "count")?;
            if count == 0 {
                return Err(Error::parse(lineno, "zero morph count"));
            }
            counts.push((f[0].to_string(), count));
        }
        let stats = MorphStats::from_counts(counts);
        if stats.total() != total {
            return Err(Error::Truncated(format!(
                "morph counts sum to {} but header says {total}",
                stats.total()
            )));
        }
        Ok(stats)
    }
}

impl ModelFile for DistanceTable {
    fn to_text(&self) -> String {
        let mut out = format!("{DISTANCE_FORMAT} {VERSION} d_max={}\n", self.d_max());
        for (morph, label, d) in self.entries() {
            out.push_str(&format!("{morph}\t{label}\t{d}\n"));
        }
        out
    }

    fn from_text(text: &str) -> Result<Self> {
        let mut lines = lines(text)?;
        let (_, header) = lines.next().unwrap();
        let d_max: f64 = field(parse_header(header, DISTANCE_FORMAT, "d_max")?, 1, "d_max")?;
        let mut table = DistanceTable::new(d_max);
        for (lineno, line) in lines {
            let f = split_fields(line, lineno, 3)?;
            let d: f64 = field(f[2], lineno, "distance")?;
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::parse(lineno, format!("invalid distance {d}")));
            }
            table.insert(f[0].to_string(), f[1].to_string(), d);
        }
        Ok(table)
    }
}

impl ModelFile for Segmentation {
    fn to_text(&self) -> String {
        let mut out = String::new();
        for (word, morphs) in self {
            out.push_str(word);
            out.push('\t');
            out.push_str(&morphs.join(" "));
            out.push('\n');
        }
        out
    }

    fn from_text(text: &str) -> Result<Self> {
        let mut seg = Segmentation::new();
        if text.is_empty() {
            return Ok(seg);
        }
        for (lineno, line) in lines(text)? {
            if line.is_empty() {
                continue;
            }
            let f = split_fields(line, lineno, 2)?;
            let morphs: Vec<String> = f[1].split(' ').map(str::to_string).collect();
            if morphs.iter().any(String::is_empty) || morphs.concat() != f[0] {
                return Err(Error::parse(lineno, format!("morphs do not spell out {:?}", f[0])));
            }
            if seg.insert(f[0].to_string(), morphs).is_some() {
                return Err(Error::parse(lineno, format!("duplicate word {:?}", f[0])));
            }
        }
        Ok(seg)
    }
}

/// A trained segmenter of either kind.
#[derive(Debug, Clone)]
pub enum Model {
    Mdl(ChunkStore),
    Ml(MorphStats),
}

impl Model {
    /// Loads a model file, choosing the kind from its header.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = read_text(path.as_ref())?;
        let first = text.split(' ').next().unwrap_or_default();
        match first {
            MDL_FORMAT => ChunkStore::from_text(&text).map(Model::Mdl),
            ML_FORMAT => MorphStats::from_text(&text).map(Model::Ml),
            _ => Err(Error::Version(text.lines().next().unwrap_or_default().to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use crate::mdl::{train_online, MdlConfig};

    #[test]
    fn mdl_store_round_trip() {
        let mut store = ChunkStore::default();
        store.process_word("aa").unwrap();
        let text = store.to_text();
        assert_eq!(text, "morphseg-mdl v1 char_bits=5\na\t0\t2\naa\t1\t1\n");
        let loaded = ChunkStore::from_text(&text).unwrap();
        assert_eq!(loaded, store);
        assert_eq!(loaded.tracked_cost(), store.tracked_cost());
    }

    #[test]
    fn trained_store_round_trip_is_byte_identical() {
        let corpus = Corpus::from_tokens(
            "talo talossa talon autot auton autossa talot taloissa auto talo kala kalassa".split(' '),
        )
        .unwrap();
        let store = train_online(
            &corpus,
            &MdlConfig {
                dream_interval: 5,
                ..MdlConfig::default()
            },
        )
        .unwrap();
        let text = store.to_text();
        let loaded = ChunkStore::from_text(&text).unwrap();
        assert_eq!(loaded, store);
        assert_eq!(loaded.tracked_cost(), store.tracked_cost());
        assert_eq!(loaded.to_text(), text);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            ChunkStore::from_text("morphseg-mdl v0 char_bits=5\na\t0\t1\n"),
            Err(Error::Version(_))
        ));
        assert!(matches!(
            MorphStats::from_text("morphseg-mdl v1 char_bits=5\n"),
            Err(Error::Version(_))
        ));
        assert!(matches!(ChunkStore::from_text(""), Err(Error::Truncated(_))));
        assert!(matches!(
            ChunkStore::from_text("morphseg-mdl v1 char_bits=5\na\t0\t1"),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(
            MorphStats::from_text("morphseg-ml v1 total=5\na\t2\n"),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn malformed_records_report_line() {
        match ChunkStore::from_text("morphseg-mdl v1 char_bits=5\na\t0\t1\nb\tx\t1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match Segmentation::from_text("talo\ttalo\ntalot\ttal ot x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(ChunkStore::from_text("morphseg-mdl v1 char_bits=5\nab\t1\t1\n").is_err());
    }

    #[test]
    fn stats_and_segmentation_round_trip() {
        let stats = MorphStats::from_counts([("talo", 4), ("ssa", 2), ("n", 7)]);
        let text = stats.to_text();
        assert_eq!(text, "morphseg-ml v1 total=13\nn\t7\nssa\t2\ntalo\t4\n");
        assert_eq!(MorphStats::from_text(&text).unwrap(), stats);

        let seg: Segmentation = [("talossa".to_string(), vec!["talo".to_string(), "ssa".to_string()])].into();
        assert_eq!(seg.to_text(), "talossa\ttalo ssa\n");
        assert_eq!(Segmentation::from_text(&seg.to_text()).unwrap(), seg);
    }

    #[test]
    fn distance_precision_survives() {
        let mut table = DistanceTable::new(10.415037499278844);
        let d = -(3.0f64 / 4.0).log2();
        table.insert("s".into(), "PL".into(), d);
        table.insert("s".into(), "GEN".into(), 2.0);
        let loaded = DistanceTable::from_text(&table.to_text()).unwrap();
        assert_eq!(loaded.get("s", "PL"), Some(d));
        assert_eq!(loaded, table);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn distance_tables_round_trip(
                entries in prop::collection::vec(("[a-z]{1,5}", "[A-Z]{1,4}", 0.0f64..40.0), 0..30),
                d_max in 0.0f64..100.0,
            ) {
                let mut table = DistanceTable::new(d_max);
                for (m, l, d) in entries {
                    table.insert(m, l, d);
                }
                let text = table.to_text();
                let loaded = DistanceTable::from_text(&text).unwrap();
                prop_assert_eq!(&loaded, &table);
                prop_assert_eq!(loaded.to_text(), text);
            }

            #[test]
            fn chunk_stores_round_trip(words in prop::collection::vec("[a-dä]{1,8}", 1..40)) {
                let mut store = ChunkStore::default();
                for w in &words {
                    store.process_word(w).unwrap();
                }
                let text = store.to_text();
                let loaded = ChunkStore::from_text(&text).unwrap();
                prop_assert_eq!(&loaded, &store);
                prop_assert_eq!(loaded.tracked_cost(), store.tracked_cost());
            }
        }
    }
}
