use std::fmt;

use crate::error::{Error, Result};

/// Architecture description. The three `enable_*` switches for PPM, GGFs and
/// FAMs span the ablation matrix in [`AblationRow`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Channel width of the five backbone stages (stage 1 at full
    /// resolution, stages 2..5 emitting C2..C5).
    pub backbone_widths: Vec<usize>,
    /// Top-down fusion width at levels 2..5.
    pub pyramid_channels: Vec<usize>,
    /// Residual-block width of the edge branch at levels 2..4.
    pub edge_widths: Vec<usize>,
    pub enable_ppm: bool,
    pub enable_ggf: bool,
    pub enable_fam: bool,
    pub enable_edge: bool,
    pub fam_rates: Vec<usize>,
    pub ppm_sizes: Vec<usize>,
}

/// Compressed edge map width per level; three levels concatenate to 48.
pub const EDGE_COMPRESS_CHANNELS: usize = 16;
/// Width of the three convolutions that turn the concatenated edge maps into
/// the feature handed to the saliency head.
pub const EDGE_FUSE_CHANNELS: usize = 48;
pub const EDGE_LEVELS: usize = 3;

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Small widths that train on a CPU in minutes.
    pub fn desk() -> Self {
        let backbone_widths = vec![16, 32, 64, 128, 128];
        Self {
            pyramid_channels: backbone_widths[1..].to_vec(),
            backbone_widths,
            edge_widths: vec![32, 64, 128],
            enable_ppm: true,
            enable_ggf: true,
            enable_fam: true,
            enable_edge: false,
            fam_rates: vec![2, 4, 8],
            ppm_sizes: vec![3, 5],
        }
    }

    /// VGG-16 widths: C2..C5 carry 128/256/512/512 channels.
    pub fn paper_scale() -> Self {
        let backbone_widths = vec![64, 128, 256, 512, 512];
        Self {
            pyramid_channels: backbone_widths[1..].to_vec(),
            backbone_widths,
            edge_widths: vec![128, 256, 512],
            ..Self::desk()
        }
    }

    /// Uniform narrow widths, handy for exhaustive gradient checks.
    pub fn tiny(width: usize) -> Self {
        Self {
            backbone_widths: vec![width; 5],
            pyramid_channels: vec![width; 4],
            edge_widths: vec![width; 3],
            ..Self::desk()
        }
    }

    pub fn with_row(mut self, row: AblationRow) -> Self {
        let (ppm, ggf, fam) = row.switches();
        self.enable_ppm = ppm;
        self.enable_ggf = ggf;
        self.enable_fam = fam;
        self
    }

    pub fn with_edge(mut self, on: bool) -> Self {
        self.enable_edge = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.backbone_widths.len() != 5 {
            return err(format!("backbone_widths needs 5 entries, got {}", self.backbone_widths.len()));
        }
        if self.pyramid_channels.len() != 4 {
            return err(format!("pyramid_channels needs 4 entries, got {}", self.pyramid_channels.len()));
        }
        if self.edge_widths.len() != EDGE_LEVELS {
            return err(format!("edge_widths needs {EDGE_LEVELS} entries, got {}", self.edge_widths.len()));
        }
        let all = self.backbone_widths.iter().chain(&self.pyramid_channels).chain(&self.edge_widths);
        if all.into_iter().any(|&w| w == 0) {
            return err("channel widths must be >= 1".into());
        }
        if self.fam_rates.is_empty() || self.fam_rates.iter().any(|&r| r < 2) {
            return err(format!("fam_rates must be non-empty and >= 2, got {:?}", self.fam_rates));
        }
        if self.fam_rates.windows(2).any(|w| w[0] >= w[1]) {
            return err(format!("fam_rates must be strictly ascending, got {:?}", self.fam_rates));
        }
        if self.ppm_sizes.is_empty() || self.ppm_sizes.iter().any(|&s| s < 2) {
            return err(format!("ppm_sizes must be non-empty and >= 2, got {:?}", self.ppm_sizes));
        }
        Ok(())
    }

    pub fn row(&self) -> Option<AblationRow> {
        AblationRow::ALL.into_iter().find(|r| r.switches() == (self.enable_ppm, self.enable_ggf, self.enable_fam))
    }

    /// `key = value` pairs in the order [`ModelConfig::set`] accepts them.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("backbone_widths", join(&self.backbone_widths)),
            ("pyramid_channels", join(&self.pyramid_channels)),
            ("edge_widths", join(&self.edge_widths)),
            ("enable_ppm", self.enable_ppm.to_string()),
            ("enable_ggf", self.enable_ggf.to_string()),
            ("enable_fam", self.enable_fam.to_string()),
            ("enable_edge", self.enable_edge.to_string()),
            ("fam_rates", join(&self.fam_rates)),
            ("ppm_sizes", join(&self.ppm_sizes)),
        ]
    }

    pub const KEYS: [&'static str; 10] = [
        "preset",
        "backbone_widths",
        "pyramid_channels",
        "edge_widths",
        "enable_ppm",
        "enable_ggf",
        "enable_fam",
        "enable_edge",
        "fam_rates",
        "ppm_sizes",
    ];

    /// Applies one `key = value` setting. Returns `Ok(false)` for keys that
    /// do not belong to the model.
    ///
    /// `preset = desk|paper` resets the widths; it should come first.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "preset" => {
                let p = match value {
                    "desk" => Self::desk(),
                    "paper" => Self::paper_scale(),
                    other => return Err(Error::Config(format!("unknown preset `{other}` (desk|paper)"))),
                };
                self.backbone_widths = p.backbone_widths;
                self.pyramid_channels = p.pyramid_channels;
                self.edge_widths = p.edge_widths;
            }
            "backbone_widths" => self.backbone_widths = parse_list(key, value)?,
            "pyramid_channels" => self.pyramid_channels = parse_list(key, value)?,
            "edge_widths" => self.edge_widths = parse_list(key, value)?,
            "enable_ppm" => self.enable_ppm = parse_bool(key, value)?,
            "enable_ggf" => self.enable_ggf = parse_bool(key, value)?,
            "enable_fam" => self.enable_fam = parse_bool(key, value)?,
            "enable_edge" => self.enable_edge = parse_bool(key, value)?,
            "fam_rates" => self.fam_rates = parse_list(key, value)?,
            "ppm_sizes" => self.ppm_sizes = parse_list(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub(crate) fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("`{key}`: `{s}` is not a non-negative integer")))
        })
        .collect()
}

pub(crate) fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!("`{key}`: `{other}` is not a boolean"))),
    }
}

/// The six (PPM, GGFs, FAMs) combinations of the ablation study, in table
/// order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AblationRow {
    Baseline,
    PpmOnly,
    GgfOnly,
    Ggm,
    FamOnly,
    Full,
}

impl AblationRow {
    pub const ALL: [AblationRow; 6] = [
        AblationRow::Baseline,
        AblationRow::PpmOnly,
        AblationRow::GgfOnly,
        AblationRow::Ggm,
        AblationRow::FamOnly,
        AblationRow::Full,
    ];

    /// `(ppm, ggf, fam)`.
    pub fn switches(self) -> (bool, bool, bool) {
        match self {
            AblationRow::Baseline => (false, false, false),
            AblationRow::PpmOnly => (true, false, false),
            AblationRow::GgfOnly => (false, true, false),
            AblationRow::Ggm => (true, true, false),
            AblationRow::FamOnly => (false, false, true),
            AblationRow::Full => (true, true, true),
        }
    }

    /// 1-based position in the table.
    pub fn number(self) -> usize {
        Self::ALL.iter().position(|&r| r == self).expect("listed") + 1
    }

    pub fn code(self) -> String {
        let (p, g, f) = self.switches();
        [p, g, f].iter().map(|&b| if b { 'T' } else { 'F' }).collect()
    }
}

impl fmt::Display for AblationRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AblationRow::Baseline => "FPN baseline",
            AblationRow::PpmOnly => "PPM only",
            AblationRow::GgfOnly => "GGFs only",
            AblationRow::Ggm => "GGM",
            AblationRow::FamOnly => "FAMs only",
            AblationRow::Full => "GGM + FAMs",
        };
        f.write_str(s)
    }
}
