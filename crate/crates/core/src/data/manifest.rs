//! Tab-separated dataset manifests: one `image_path<TAB>gt_path` line per
//! entry, paths relative to the manifest's directory.

use std::fmt;
use std::path::{Path, PathBuf};

use super::netpbm::load_image;
use super::sample::{Sample, PAD_MULTIPLE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleKind {
    Saliency,
    Edge,
}

impl fmt::Display for SampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleKind::Saliency => "saliency",
            SampleKind::Edge => "edge",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub gt: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub kind: SampleKind,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.tsv";

impl DatasetManifest {
    pub fn parse(text: &str, root: &Path, kind: SampleKind, origin: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(img), Some(gt), None) if !img.is_empty() && !gt.is_empty() => {
                    entries.push(ManifestEntry { image: img.into(), gt: gt.into() })
                }
                _ => {
                    return Err(Error::data(
                        origin,
                        format!("line {}: expected `image_path<TAB>gt_path`", i + 1),
                    ))
                }
            }
        }
        Ok(Self { root: root.to_owned(), kind, entries })
    }

    /// Reads a manifest file; the root is its parent directory.
    pub fn read(path: &Path, kind: SampleKind) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_owned).unwrap_or_default();
        Self::parse(&text, &root, kind, path)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|e| format!("{}\t{}\n", e.image.display(), e.gt.display())).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn image_path(&self, i: usize) -> PathBuf {
        self.root.join(&self.entries[i].image)
    }

    pub fn gt_path(&self, i: usize) -> PathBuf {
        self.root.join(&self.entries[i].gt)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fails on the first referenced file that does not exist.
    pub fn check_files(&self) -> Result<()> {
        for i in 0..self.len() {
            for p in [self.image_path(i), self.gt_path(i)] {
                if !p.is_file() {
                    return Err(Error::data(p, "referenced file does not exist"));
                }
            }
        }
        Ok(())
    }

    /// Loads entry `i` at native size, padded to the network multiple.
    pub fn load_sample(&self, i: usize) -> Result<Sample> {
        let img_path = self.image_path(i);
        let mut image = load_image(&img_path)?;
        if image.channels() == 1 {
            let g = image.data().to_vec();
            let [_, _, h, w] = image.shape();
            image = crate::Tensor::new([1, 3, h, w], [g.clone(), g.clone(), g].concat())?;
        }
        let gt_path = self.gt_path(i);
        let gt = load_image(&gt_path)?;
        if gt.channels() != 1 {
            return Err(Error::data(gt_path, "ground truth must be a single-channel PGM"));
        }
        if gt.shape()[2..] != image.shape()[2..] {
            return Err(Error::data(
                gt_path,
                format!("size {:?} differs from image size {:?}", &gt.shape()[2..], &image.shape()[2..]),
            ));
        }
        Ok(Sample::new(image, gt)?.pad_to_multiple(PAD_MULTIPLE))
    }

    /// All samples in manifest order.
    pub fn load_all(&self) -> Result<Vec<Sample>> {
        self.check_files()?;
        (0..self.len()).map(|i| self.load_sample(i)).collect()
    }
}
