use crate::dataset::JamLabel;
use crate::error::Result;
use crate::nnet::{argmax, Model, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageDecision {
    pub label: JamLabel,
    pub stage1: Vec<f64>,
    /// `None` when stage 1 said No Jamming.
    pub stage2: Option<Vec<f64>>,
}

/// Gating rule of the two-stage pipeline. `stage2` is only called on a
/// positive stage-1 decision.
pub fn decide_two_stage(
    stage1: Vec<f64>,
    stage2: impl FnOnce() -> Result<Vec<f64>>,
) -> Result<TwoStageDecision> {
    if argmax(&stage1) == 0 {
        return Ok(TwoStageDecision {
            label: JamLabel::NoJamming,
            stage1,
            stage2: None,
        });
    }
    let p2 = stage2()?;
    let label = if argmax(&p2) == 0 {
        JamLabel::FixedJamming
    } else {
        JamLabel::MovingJamming
    };
    Ok(TwoStageDecision {
        label,
        stage1,
        stage2: Some(p2),
    })
}

pub fn classify_two_stage<T: Real>(
    stage1: &Model<T>,
    stage2: &Model<T>,
    rssi: &[f64],
    sinr: &[f64],
) -> Result<TwoStageDecision> {
    decide_two_stage(stage1.predict(rssi, sinr)?, || stage2.predict(rssi, sinr))
}

/// Label from a three-class probability vector; ties go to the lower class.
pub fn label_from_three(probs: &[f64]) -> JamLabel {
    JamLabel::ALL[argmax(probs)]
}

pub fn classify_three_class<T: Real>(model: &Model<T>, rssi: &[f64], sinr: &[f64]) -> Result<JamLabel> {
    Ok(label_from_three(&model.predict(rssi, sinr)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::tensor::softmax;
    use crate::nnet::{ModelConfig, Variant};

    #[test]
    fn negative_stage1_skips_stage2() {
        let d = decide_two_stage(vec![0.9, 0.1], || panic!("stage 2 must not run")).unwrap();
        assert_eq!(d.label, JamLabel::NoJamming);
        assert!(d.stage2.is_none());
    }

    #[test]
    fn composition() {
        let d = decide_two_stage(vec![0.1, 0.9], || Ok(vec![0.2, 0.8])).unwrap();
        assert_eq!(d.label, JamLabel::MovingJamming);
        let d = decide_two_stage(vec![0.1, 0.9], || Ok(vec![0.7, 0.3])).unwrap();
        assert_eq!(d.label, JamLabel::FixedJamming);
    }

    #[test]
    fn scaling_preactivations_keeps_decision() {
        for z in [[0.3, -1.2], [2.0, 2.5], [-0.1, -0.1]] {
            let base = decide_two_stage(softmax(&z), || Ok(vec![0.4, 0.6])).unwrap().label;
            for c in [0.01, 0.5, 3.0, 100.0] {
                let scaled = [z[0] * c, z[1] * c];
                let l = decide_two_stage(softmax(&scaled), || Ok(vec![0.4, 0.6])).unwrap().label;
                assert_eq!(l, base);
            }
        }
    }

    #[test]
    fn three_class_ties_and_one_hot() {
        assert_eq!(label_from_three(&[1.0 / 3.0; 3]), JamLabel::NoJamming);
        assert_eq!(label_from_three(&[0.0, 0.0, 1.0]), JamLabel::MovingJamming);
        assert_eq!(label_from_three(&[0.0, 1.0, 0.0]), JamLabel::FixedJamming);
    }

    #[test]
    fn stage_counts_add_up() {
        let s1 = Model::<f64>::new(ModelConfig::table(Variant::Attention, 2, 128), 1).unwrap();
        let s2 = Model::<f64>::new(ModelConfig::table(Variant::Attention, 2, 128), 2).unwrap();
        let (mut yes, mut fixed_or_moving) = (0, 0);
        for k in 0..30 {
            let r: Vec<f64> = (0..128).map(|i| ((i * (k + 1)) as f64 * 0.07).sin()).collect();
            let q: Vec<f64> = (0..128).map(|i| ((i + k) as f64 * 0.13).cos()).collect();
            let d = classify_two_stage(&s1, &s2, &r, &q).unwrap();
            yes += usize::from(argmax(&d.stage1) == 1);
            fixed_or_moving += usize::from(d.label != JamLabel::NoJamming);
        }
        assert_eq!(yes, fixed_or_moving);
    }
}
