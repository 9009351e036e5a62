use poolnet::model::{
    AblationRow, ForwardOptions, ModelConfig, ParamRole, PoolNet, PpmBranch, ResidualBlock, StepKind,
    EDGE_FUSE_CHANNELS,
};
use poolnet::param::ParamStore;
use poolnet::train::{balanced_bce_loss, bce_loss};
use poolnet::Tensor;

fn image(h: usize, w: usize) -> Tensor<f32> {
    Tensor::from_fn([1, 3, h, w], |i| ((i * 7919 % 257) as f32) / 257.0)
}

#[test]
fn all_rows_forward_at_64() {
    for row in AblationRow::ALL {
        let cfg = ModelConfig::desk().with_row(row);
        let m = PoolNet::<f32>::new(&cfg, 1).unwrap();
        let (out, trace) = m.forward_traced(&image(64, 64), ForwardOptions::default()).unwrap();
        assert_eq!(out.saliency_logits.shape(), [1, 1, 64, 64], "row {row}");
        assert!(out.edge_logits.is_none());
        assert!(out.saliency_logits.data().iter().all(|v| v.is_finite()));
        let (ppm, ggf, fam) = row.switches();
        assert_eq!(!trace.ppm_branches.is_empty(), ppm);
        assert_eq!(trace.ggf_shapes.len(), if ggf { 4 } else { 0 });
        assert_eq!(trace.fam_branches, if fam { vec![4; 4] } else { vec![0; 4] });
    }
}

#[test]
fn ppm_branches_are_identity_three_five_global() {
    let m = PoolNet::<f32>::new(&ModelConfig::desk(), 0).unwrap();
    let (_, trace) = m.forward_traced(&image(64, 64), ForwardOptions::default()).unwrap();
    assert_eq!(trace.pyramid_shapes[3], [1, 128, 4, 4]);
    let sizes: Vec<(usize, usize)> = trace.ppm_branches.iter().map(|b| b.size()).collect();
    assert_eq!(sizes, vec![(4, 4), (3, 3), (5, 5), (1, 1)]);
    assert!(matches!(trace.ppm_branches[0], PpmBranch::Identity(..)));
    assert!(matches!(trace.ppm_branches[3], PpmBranch::Global));
}

#[test]
fn guiding_flows_match_each_level() {
    let m = PoolNet::<f32>::new(&ModelConfig::desk(), 0).unwrap();
    let (_, trace) = m.forward_traced(&image(64, 96), ForwardOptions::default()).unwrap();
    assert_eq!(trace.ggf_shapes, trace.fused_shapes);
    let spatial: Vec<[usize; 2]> = trace.ggf_shapes.iter().map(|s| [s[2], s[3]]).collect();
    assert_eq!(spatial, vec![[4, 6], [8, 12], [16, 24], [32, 48]]);
}

#[test]
fn dropping_the_guidance_changes_the_output() {
    let m = PoolNet::<f32>::new(&ModelConfig::desk(), 4).unwrap();
    let x = image(64, 64);
    let (a, _) = m.forward_traced(&x, ForwardOptions::default()).unwrap();
    let (b, _) = m.forward_traced(&x, ForwardOptions { drop_ggf_addend: true }).unwrap();
    let diff: f32 = a.saliency_logits.data().iter().zip(b.saliency_logits.data()).map(|(p, q)| (p - q).abs()).sum();
    assert!(diff > 1e-4, "diff {diff}");
}

#[test]
fn fam_off_removes_parameters() {
    let full = PoolNet::<f32>::new(&ModelConfig::desk(), 0).unwrap();
    let no_fam = PoolNet::<f32>::new(&ModelConfig::desk().with_row(AblationRow::Ggm), 0).unwrap();
    assert_ne!(full.parameter_count(), no_fam.parameter_count());
    assert!(full.params().iter().any(|p| p.name.starts_with("fam.level2.pool8")));
    assert!(no_fam.params().iter().all(|p| !p.name.starts_with("fam.")));
}

#[test]
fn edge_branch_outputs_and_fusion_width() {
    let cfg = ModelConfig::desk().with_edge(true);
    let m = PoolNet::<f32>::new(&cfg, 2).unwrap();
    let (out, trace) = m.forward_traced(&image(48, 80), ForwardOptions::default()).unwrap();
    assert_eq!(trace.edge_concat_channels, Some(EDGE_FUSE_CHANNELS));
    assert_eq!(trace.head_in_channels, 32 + EDGE_FUSE_CHANNELS);
    let sides = out.edge_logits.unwrap();
    assert_eq!(sides.len(), 3);
    for s in &sides {
        assert_eq!(s.shape(), [1, 1, 48, 80]);
    }
}

#[test]
fn edge_switch_keeps_shared_weights() {
    let on = PoolNet::<f32>::new(&ModelConfig::desk().with_edge(true), 9).unwrap();
    let off = PoolNet::<f32>::new(&ModelConfig::desk(), 9).unwrap();
    for p in off.params().iter().filter(|p| p.name != "head.score.weight") {
        let q = on.params().by_name(&p.name).unwrap();
        assert_eq!(p.tensor.data(), q.tensor.data(), "{}", p.name);
    }
}

#[test]
fn zeroed_residual_block_is_identity() {
    let mut store = ParamStore::<f64>::new();
    let block = ResidualBlock::new(&mut store, "r", 3, 4).unwrap();
    let names: Vec<String> = store.iter().map(|p| p.name.clone()).collect();
    for n in names {
        let shape = store.by_name(&n).unwrap().tensor.shape();
        store.assign(&n, shape, vec![0.0; shape.iter().product()]).unwrap();
    }
    let x = Tensor::from_fn([1, 4, 5, 5], |i| (i as f64 * 0.37).sin());
    assert_eq!(block.forward(&store, &x).unwrap().data(), x.data());
}

#[test]
fn every_parameter_receives_a_gradient() {
    let cfg = ModelConfig::desk().with_edge(true);
    let m = PoolNet::<f32>::new(&cfg, 5).unwrap();
    let x = image(32, 32);
    let target = Tensor::from_fn([1, 1, 32, 32], |i| ((i / 32 + i % 32) % 3 == 0) as u8 as f32);
    let out = m.forward(&x).unwrap();
    let mut loss = bce_loss(&out.saliency_logits, &target).unwrap();
    for s in out.edge_logits.as_ref().unwrap() {
        loss = loss.add(&balanced_bce_loss(s, &target).unwrap()).unwrap();
    }
    loss.backward().unwrap();
    let missing: Vec<&str> = m.params().iter().filter(|p| !p.tensor.has_grad()).map(|p| p.name.as_str()).collect();
    assert!(missing.is_empty(), "no gradient: {missing:?}");
}

#[test]
fn step_losses_reach_exactly_their_parameters() {
    let cfg = ModelConfig::desk().with_edge(true);
    let m = PoolNet::<f32>::new(&cfg, 6).unwrap();
    let x = image(32, 32);
    let target = Tensor::from_fn([1, 1, 32, 32], |i| (i % 5 == 0) as u8 as f32);
    for kind in [StepKind::Saliency, StepKind::Edge] {
        m.params().zero_grad();
        let out = m.forward(&x).unwrap();
        let loss = match kind {
            StepKind::Saliency => bce_loss(&out.saliency_logits, &target).unwrap(),
            StepKind::Edge => balanced_bce_loss(&out.edge_logits.unwrap()[0], &target).unwrap(),
        };
        loss.backward().unwrap();
        for p in m.params().iter() {
            let role = m.role(&p.name);
            let forbidden = match kind {
                StepKind::Saliency => role == ParamRole::EdgeOnly,
                StepKind::Edge => role == ParamRole::SaliencyOnly,
            };
            if forbidden {
                assert!(!p.tensor.has_grad(), "{kind:?} loss reached {}", p.name);
            }
        }
        let expected = m.params_for(kind);
        let reached = expected.iter().filter(|&&id| m.params().get(id).has_grad()).count();
        if kind == StepKind::Saliency {
            assert_eq!(reached, expected.len());
        }
    }
}

#[test]
fn paper_scale_pyramid_widths() {
    let m = PoolNet::<f32>::new(&ModelConfig::paper_scale(), 0).unwrap();
    let feats = m.backbone_features(&image(32, 32)).unwrap();
    let widths: Vec<usize> = feats.levels.iter().map(|l| l.channels()).collect();
    assert_eq!(widths, vec![128, 256, 512, 512]);
}

#[test]
fn forward_is_deterministic() {
    let m = PoolNet::<f32>::new(&ModelConfig::desk().with_edge(true), 11).unwrap();
    let a = m.forward(&image(64, 64)).unwrap();
    let b = m.forward(&image(64, 64)).unwrap();
    assert_eq!(a.saliency_logits.data(), b.saliency_logits.data());
}
