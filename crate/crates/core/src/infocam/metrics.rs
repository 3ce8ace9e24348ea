use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{extract_bbox, intensity_map, iou, ArgminScope, IntensityMap, MapMode};
use crate::error::{Error, Result};
use crate::losses_mi::{predict, Prediction};
use crate::models::{ClassifierModel, ConvGapModel, Network};
use crate::vision_data::LocalizationSample;

/// A predicted box counts as a hit when its IoU with the truth exceeds this.
pub const IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationMetrics {
    pub gt_loc: f64,
    pub top1_loc: f64,
    pub n_samples: usize,
}

fn conv_net(model: &ClassifierModel) -> Result<&ConvGapModel> {
    match &model.network {
        Network::ConvGap(net) => Ok(net),
        Network::Mlp(_) => Err(Error::contract("localisation needs a conv-GAP network")),
    }
}

/// Logits and the intensity map of class `y` for one image.
pub fn class_map(
    model: &ClassifierModel,
    image: &[f64],
    y: usize,
    mode: MapMode,
    region: usize,
    scope: ArgminScope,
) -> Result<(Vec<f64>, IntensityMap)> {
    let net = conv_net(model)?;
    let [c, h, w] = net.input_shape();
    if image.len() != c * h * w {
        return Err(Error::contract(format!(
            "image has {} values, network expects {c}x{h}x{w}",
            image.len()
        )));
    }
    let (logits, features) = net.forward_with_features(image);
    let map = intensity_map(mode, &features, net.head(), y, region, scope)?;
    Ok((logits, map))
}

/// GT-Loc and Top-1-Loc over every (sample, present label) pair.
///
/// GT-Loc asks only for IoU above [`IOU_THRESHOLD`]; Top-1-Loc also needs the
/// label to be predicted (argmax for single-label heads, the per-label
/// decision for multilabel heads).
pub fn evaluate_localization(
    model: &ClassifierModel,
    samples: &[LocalizationSample],
    mode: MapMode,
    region: usize,
    threshold_ratio: f64,
    scope: ArgminScope,
) -> Result<LocalizationMetrics> {
    if samples.is_empty() {
        return Err(Error::contract("no samples to evaluate"));
    }
    let per_sample = samples
        .par_iter()
        .map(|s| {
            let mut hits = (0usize, 0usize, 0usize);
            for (&y, gt) in s.labels.iter().zip(&s.gt_boxes) {
                let (logits, map) = class_map(model, s.image.data(), y, mode, region, scope)?;
                let found = extract_bbox(&map, s.height(), s.width(), threshold_ratio)?;
                let located = iou(&found.bbox, gt) > IOU_THRESHOLD;
                let classified = match predict(&logits, &model.head)? {
                    Prediction::Class(c) => c == y,
                    Prediction::Labels(on) => on[y],
                };
                hits.0 += located as usize;
                hits.1 += (located && classified) as usize;
                hits.2 += 1;
            }
            Ok(hits)
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut gt, mut top1, mut pairs) = (0, 0, 0);
    for (g, t, p) in per_sample {
        gt += g;
        top1 += t;
        pairs += p;
    }
    if pairs == 0 {
        return Err(Error::contract("samples carry no labels"));
    }
    Ok(LocalizationMetrics {
        gt_loc: gt as f64 / pairs as f64,
        top1_loc: top1 as f64 / pairs as f64,
        n_samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_math::{RngStream, Tensor};
    use crate::losses_mi::LossSpec;
    use crate::models::{ConvGapArch, ConvStageSpec};
    use crate::vision_data::BoundingBox;

    /// One identity-like 1×1 conv, ReLU, and a head reading channel 0 for
    /// class 0 and nothing for class 1.
    fn bright_spot_model(head_rows: [[f64; 1]; 2]) -> ClassifierModel {
        let arch = ConvGapArch {
            input: [1, 8, 8],
            stages: vec![ConvStageSpec { out_channels: 1, kernel_h: 1, kernel_w: 1, pool: false }],
            classes: 2,
        };
        let mut net = ConvGapModel::new(arch, &mut RngStream::new(0, 0)).unwrap();
        net.stages_mut()[0].weight.data_mut()[0] = 1.0;
        net.stages_mut()[0].bias.data_mut()[0] = 0.0;
        *net.head_mut() = Tensor::new(vec![2, 1], vec![head_rows[0][0], head_rows[1][0]]).unwrap();
        ClassifierModel::new(Network::ConvGap(net), LossSpec::SoftmaxCe).unwrap()
    }

    fn square_sample(label: usize) -> LocalizationSample {
        let mut img = vec![0.0; 64];
        for r in 2..5 {
            for c in 3..6 {
                img[r * 8 + c] = 1.0;
            }
        }
        LocalizationSample {
            image: Tensor::new(vec![8, 8], img).unwrap(),
            labels: vec![label],
            gt_boxes: vec![BoundingBox::new(3, 2, 5, 4)],
        }
    }

    #[test]
    fn perfect_boxes_and_right_class() {
        let model = bright_spot_model([[1.0], [0.0]]);
        let m = evaluate_localization(&model, &[square_sample(0)], MapMode::Cam, 1, 0.2, ArgminScope::PerWindow)
            .unwrap();
        assert_eq!((m.gt_loc, m.top1_loc, m.n_samples), (1.0, 1.0, 1));
    }

    #[test]
    fn perfect_boxes_wrong_class() {
        // Class 1 reads the spot positively but class 0 wins the logits.
        let model = bright_spot_model([[2.0], [1.0]]);
        let m = evaluate_localization(&model, &[square_sample(1)], MapMode::Cam, 1, 0.2, ArgminScope::PerWindow)
            .unwrap();
        assert_eq!((m.gt_loc, m.top1_loc), (1.0, 0.0));
    }

    #[test]
    fn rejects_empty_and_mlp() {
        let model = bright_spot_model([[1.0], [0.0]]);
        assert!(evaluate_localization(&model, &[], MapMode::Cam, 1, 0.2, ArgminScope::PerWindow).is_err());
        let mlp = crate::models::MlpModel::new(&[64, 2], &mut RngStream::new(0, 0)).unwrap();
        let mlp = ClassifierModel::new(Network::Mlp(mlp), LossSpec::SoftmaxCe).unwrap();
        assert!(evaluate_localization(&mlp, &[square_sample(0)], MapMode::Cam, 1, 0.2, ArgminScope::PerWindow)
            .is_err());
    }
}
