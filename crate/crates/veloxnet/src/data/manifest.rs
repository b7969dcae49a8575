//! Dataset manifest: `manifest.csv` (path,label,split) plus `stats.csv`
//! (channel,mean,std) with training-split normalization statistics.

use crate::error::{Error, Result};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::data(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub path: String,
    pub label: usize,
    pub split: Split,
}

/// Per-channel normalization statistics of the training split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

pub const MANIFEST_HEADER: &str = "path,label,split";
pub const STATS_HEADER: &str = "channel,mean,std";

pub fn parse_manifest_csv(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == MANIFEST_HEADER => {}
        Some(h) => return Err(Error::data(format!("bad manifest header '{h}'"))),
        None => return Err(Error::data("empty manifest.csv")),
    }
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let lineno = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::data(format!(
                "manifest line {lineno}: expected 3 fields, got {}",
                fields.len()
            )));
        }
        if fields[0].is_empty() {
            return Err(Error::data(format!("manifest line {lineno}: empty path")));
        }
        let label: usize = fields[1]
            .parse()
            .map_err(|_| Error::data(format!("manifest line {lineno}: bad label '{}'", fields[1])))?;
        let split = Split::parse(fields[2])
            .map_err(|e| Error::data(format!("manifest line {lineno}: {e}")))?;
        entries.push(ManifestEntry {
            path: fields[0].to_string(),
            label,
            split,
        });
    }
    if entries.is_empty() {
        return Err(Error::data("manifest.csv has no entries"));
    }
    Ok(entries)
}

pub fn parse_stats_csv(text: &str) -> Result<ChannelStats> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == STATS_HEADER => {}
        Some(h) => return Err(Error::data(format!("bad stats header '{h}'"))),
        None => return Err(Error::data("empty stats.csv")),
    }
    let mut mean = [0.0f64; 3];
    let mut std = [0.0f64; 3];
    let mut seen = [false; 3];
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let lineno = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::data(format!(
                "stats line {lineno}: expected 3 fields, got {}",
                fields.len()
            )));
        }
        let channel: usize = fields[0]
            .parse()
            .map_err(|_| Error::data(format!("stats line {lineno}: bad channel '{}'", fields[0])))?;
        if channel > 2 {
            return Err(Error::data(format!(
                "stats line {lineno}: channel {channel} out of range"
            )));
        }
        if seen[channel] {
            return Err(Error::data(format!(
                "stats line {lineno}: duplicate channel {channel}"
            )));
        }
        let m: f64 = fields[1]
            .parse()
            .map_err(|_| Error::data(format!("stats line {lineno}: bad mean '{}'", fields[1])))?;
        let s: f64 = fields[2]
            .parse()
            .map_err(|_| Error::data(format!("stats line {lineno}: bad std '{}'", fields[2])))?;
        if !m.is_finite() || !s.is_finite() || s <= 0.0 {
            return Err(Error::data(format!(
                "stats line {lineno}: mean/std must be finite with std > 0"
            )));
        }
        mean[channel] = m;
        std[channel] = s;
        seen[channel] = true;
    }
    if !seen.iter().all(|&s| s) {
        return Err(Error::data("stats.csv must cover channels 0, 1 and 2"));
    }
    Ok(ChannelStats { mean, std })
}

/// Loaded dataset index. Entry paths resolve relative to the manifest
/// directory; files are validated lazily when batches read them.
#[derive(Clone, Debug)]
pub struct Manifest {
    pub dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub stats: ChannelStats,
    pub classes: usize,
}

impl Manifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest_path = dir.join("manifest.csv");
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
            Error::data(format!("cannot read '{}': {e}", manifest_path.display()))
        })?;
        let entries = parse_manifest_csv(&text)?;
        let stats_path = dir.join("stats.csv");
        let stats_text = std::fs::read_to_string(&stats_path)
            .map_err(|e| Error::data(format!("cannot read '{}': {e}", stats_path.display())))?;
        let stats = parse_stats_csv(&stats_text)?;
        let classes = Self::validate_labels(&entries)?;
        Ok(Self {
            dir,
            entries,
            stats,
            classes,
        })
    }

    /// Labels must be dense in [0, K): every class below the maximum appears.
    fn validate_labels(entries: &[ManifestEntry]) -> Result<usize> {
        let max = entries.iter().map(|e| e.label).max().unwrap_or(0);
        let classes = max + 1;
        let mut present = vec![false; classes];
        for e in entries {
            present[e.label] = true;
        }
        if let Some(missing) = present.iter().position(|&p| !p) {
            return Err(Error::data(format!(
                "labels are not dense: class {missing} has no samples"
            )));
        }
        Ok(classes)
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.dir.join(&entry.path)
    }

    pub fn write(&self) -> Result<()> {
        let mut manifest = String::from(MANIFEST_HEADER);
        manifest.push('\n');
        for e in &self.entries {
            manifest.push_str(&format!("{},{},{}\n", e.path, e.label, e.split.as_str()));
        }
        std::fs::write(self.dir.join("manifest.csv"), manifest)?;
        let mut stats = String::from(STATS_HEADER);
        stats.push('\n');
        for c in 0..3 {
            stats.push_str(&format!("{},{},{}\n", c, self.stats.mean[c], self.stats.std[c]));
        }
        std::fs::write(self.dir.join("stats.csv"), stats)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_parses_and_validates() {
        let text = "path,label,split\na.vlxt,0,train\nb.vlxt,1,val\nc.vlxt,0,test\n";
        let entries = parse_manifest_csv(text).unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[1].split, Split::Val);

        assert!(parse_manifest_csv("wrong,header\n").is_err());
        assert!(parse_manifest_csv("path,label,split\nx,9z,train\n").is_err());
        assert!(parse_manifest_csv("path,label,split\nx,0,sometimes\n").is_err());
    }

    #[test]
    fn stats_parse_and_guards() {
        let text = "channel,mean,std\n0,0.5,0.2\n1,0.4,0.25\n2,0.3,0.3\n";
        let s = parse_stats_csv(text).unwrap();
        assert_eq!(s.mean[1], 0.4);
        assert!(parse_stats_csv("channel,mean,std\n0,0.5,0\n1,1,1\n2,1,1\n").is_err());
        assert!(parse_stats_csv("channel,mean,std\n0,1,1\n0,1,1\n2,1,1\n").is_err());
        assert!(parse_stats_csv("channel,mean,std\n0,1,1\n1,1,1\n").is_err());
    }

    #[test]
    fn sparse_labels_rejected() {
        let entries = parse_manifest_csv("path,label,split\na,0,train\nb,2,train\n").unwrap();
        assert!(Manifest::validate_labels(&entries).is_err());
    }
}
