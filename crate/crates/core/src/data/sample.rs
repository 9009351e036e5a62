use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Network input multiple: the backbone halves the resolution four times.
pub const PAD_MULTIPLE: usize = 16;

/// One image/annotation pair at native size plus right/bottom padding.
#[derive(Clone, Debug)]
pub struct Sample {
    /// `1×3×H×W` in `[0, 1]`.
    pub image: Tensor<f32>,
    /// `1×1×H×W` in `[0, 1]`.
    pub target: Tensor<f32>,
    /// `(width, height)` before padding.
    pub original_size: (usize, usize),
    /// `(right, bottom)` padding applied.
    pub pad: (usize, usize),
}

impl Sample {
    pub fn new(image: Tensor<f32>, target: Tensor<f32>) -> Result<Self> {
        let [_, c, h, w] = image.shape();
        if c != 3 {
            return Err(Error::shape("Sample::new", format!("image needs 3 channels, got {c}")));
        }
        if target.shape() != [1, 1, h, w] {
            return Err(Error::shape(
                "Sample::new",
                format!("target {:?} does not match image {:?}", target.shape(), image.shape()),
            ));
        }
        Ok(Self { image, target, original_size: (w, h), pad: (0, 0) })
    }

    /// Replicates the last image row/column and zero-fills the target so
    /// both spatial sizes become multiples of `m`.
    pub fn pad_to_multiple(self, m: usize) -> Sample {
        let (h, w) = (self.image.height(), self.image.width());
        let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
        if (ph, pw) == (h, w) {
            return self;
        }
        let pad_plane = |t: &Tensor<f32>, replicate: bool| {
            let [n, c, _, _] = t.shape();
            let mut out = Vec::with_capacity(n * c * ph * pw);
            for plane in t.data().chunks(h * w) {
                for y in 0..ph {
                    if y >= h && !replicate {
                        out.extend(std::iter::repeat(0.0).take(pw));
                        continue;
                    }
                    let row = &plane[y.min(h - 1) * w..(y.min(h - 1) + 1) * w];
                    out.extend_from_slice(row);
                    let fill = if replicate { row[w - 1] } else { 0.0 };
                    out.extend(std::iter::repeat(fill).take(pw - w));
                }
            }
            Tensor::new([n, c, ph, pw], out).expect("padded size is consistent")
        };
        Sample {
            image: pad_plane(&self.image, true),
            target: pad_plane(&self.target, false),
            original_size: self.original_size,
            pad: (pw - w, ph - h),
        }
    }

    /// Crops a prediction on the padded grid back to the original size.
    pub fn crop_prediction(&self, pred: &Tensor<f32>) -> Result<Tensor<f32>> {
        let (w, h) = self.original_size;
        pred.crop(h, w)
    }

    pub fn original_target(&self) -> Result<Tensor<f32>> {
        self.crop_prediction(&self.target)
    }

    /// Mirrors image and target along the width axis.
    pub fn hflip(&self) -> Sample {
        Sample { image: self.image.hflip(), target: self.target.hflip(), ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(h: usize, w: usize) -> Sample {
        let img = Tensor::from_fn([1, 3, h, w], |i| (i % 17) as f32 / 16.0);
        let tgt = Tensor::from_fn([1, 1, h, w], |i| (i % 2) as f32);
        Sample::new(img, tgt).unwrap()
    }

    #[test]
    fn thirty_pads_to_thirty_two() {
        let s = sample(30, 30).pad_to_multiple(16);
        assert_eq!(s.pad, (2, 2));
        assert_eq!(s.image.shape(), [1, 3, 32, 32]);
        // replicate on image, zeros on target
        assert_eq!(s.image.at(0, 1, 31, 31), s.image.at(0, 1, 29, 29));
        assert_eq!(s.image.at(0, 2, 5, 30), s.image.at(0, 2, 5, 29));
        assert_eq!(s.target.at(0, 0, 31, 3), 0.0);
        assert_eq!(s.target.at(0, 0, 3, 31), 0.0);
    }

    #[test]
    fn divisible_input_is_untouched() {
        let s = sample(32, 48);
        let p = s.clone().pad_to_multiple(16);
        assert_eq!(p.pad, (0, 0));
        assert_eq!(p.image.data(), s.image.data());
    }

    #[test]
    fn mismatched_target_is_rejected() {
        let img = Tensor::zeros([1, 3, 4, 4]);
        assert!(Sample::new(img.clone(), Tensor::zeros([1, 1, 4, 5])).is_err());
        assert!(Sample::new(Tensor::zeros([1, 1, 4, 4]), Tensor::zeros([1, 1, 4, 4])).is_err());
    }

    proptest! {
        #[test]
        fn pad_then_crop_round_trips(h in 1usize..40, w in 1usize..40) {
            let s = sample(h, w);
            let p = s.clone().pad_to_multiple(16);
            prop_assert_eq!(p.image.height() % 16, 0);
            prop_assert_eq!(p.image.width() % 16, 0);
            prop_assert!(p.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
            let back = p.crop_prediction(&p.target).unwrap();
            prop_assert_eq!(back.data(), s.target.data());
        }
    }
}
