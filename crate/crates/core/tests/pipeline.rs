use eapred::data::{generate_synthetic, DataError, SyntheticSpec};
use eapred::evaluation::EvalError;
use eapred::exec::Execution;
use eapred::features::FeatureMask;
use eapred::models::ModelKind;
use eapred::pipeline::{evaluate, fit, fit_samples, prepare_dataset, split_digest, ErrorKind, ExperimentConfig, PipelineError};
use eapred::training::{Control, TrainConfig, TrainError};
use sha2::{Digest, Sha256};

fn small() -> (ExperimentConfig, eapred::features::PreparedSplits) {
    let spec = SyntheticSpec {
        firms: 12,
        seed: 2,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec, Execution::Parallel).unwrap();
    let cfg = ExperimentConfig {
        seed: 4,
        model: ModelKind::LogReg,
        train: TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let prepared = prepare_dataset(&data, &cfg, Execution::Parallel).unwrap();
    (cfg, prepared)
}

#[test]
fn split_digest_hashes_firm_date_and_label() {
    let (_, prepared) = small();
    let mut h = Sha256::new();
    for s in &prepared.test {
        h.update(format!("{}|{}|{}\n", s.label.firm_id, s.label.event.announcement_date, s.label.label.name()));
    }
    assert_eq!(split_digest(&prepared.test), hex::encode(h.finalize()));
    assert_ne!(split_digest(&prepared.test), split_digest(&prepared.val));
    let mut reversed = prepared.test.clone();
    reversed.reverse();
    assert!(prepared.test.len() < 2 || split_digest(&reversed) != split_digest(&prepared.test));
}

#[test]
fn error_kinds() {
    let kind = |e: PipelineError| e.kind();
    assert_eq!(kind(DataError::Config("x".into()).into()), ErrorKind::Config);
    assert_eq!(kind(EvalError::Comparability("x".into()).into()), ErrorKind::Comparability);
    assert_eq!(kind(EvalError::Cost("x".into()).into()), ErrorKind::Config);
    assert_eq!(kind(TrainError::Config("x".into()).into()), ErrorKind::Config);
    assert_eq!(kind(TrainError::NonFiniteGradient(3).into()), ErrorKind::Numerical);
}

#[test]
fn fit_matches_fit_on_samples_and_reports_carry_the_split() {
    let (cfg, prepared) = small();
    let mask = FeatureMask::WithoutSentiment;
    let a = fit(&prepared, &cfg, mask, Execution::Parallel, &mut |_, _| Ok(Control::Continue)).unwrap();
    let b = fit_samples(&prepared.train, &prepared.val, &cfg, mask, Execution::Sequential, &mut |_, _| Ok(Control::Continue)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.log.train_losses(), b.log.train_losses());
    let report = evaluate(&a.params, &prepared.test, "test", mask, &cfg, Execution::Parallel).unwrap();
    assert_eq!(report.meta.split_digest, split_digest(&prepared.test));
    assert_eq!(report.meta.seed, 4);
    assert!(!report.meta.sentiment);
    assert_eq!(report.samples as usize, prepared.test.len());
}
