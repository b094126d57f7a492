use pause_lab::model::{BoundModel, ModelConfig, ModelParams};
use pause_lab::numeric::{grad_check, Graph, GradCheckReport, NodeId, Tensor};
use pause_lab::pause::{finetune_batch_loss_node, pretrain_batch_loss_node, random_insert, FinetuneExample, PausedSequence, Placement};
use pause_lab::Result;

const PAUSE: usize = 15;

fn tiny(seed: u64) -> ModelParams<f64> {
    let mut cfg = ModelConfig::new(2, 2, 16, 32, 8, 16);
    cfg.init_std = 0.4;
    ModelParams::init(&cfg, seed).unwrap()
}

fn rebuild(template: &ModelParams<f64>, tensors: &[Tensor<f64>]) -> ModelParams<f64> {
    let named = template.names().iter().cloned().zip(tensors.iter().cloned()).collect();
    ModelParams::from_named(template.config(), named).unwrap()
}

/// Mean loss and its analytic gradient, then a central-difference comparison.
fn check<F>(params: &ModelParams<f64>, build: F) -> GradCheckReport
where
    F: for<'p> Fn(&BoundModel<'p, f64>, &mut Graph<'p, f64>) -> Result<(NodeId, usize)>,
{
    let mean = |p: &ModelParams<f64>| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g = Graph::new();
        let model = BoundModel::new(p, &mut g);
        let (node, terms) = build(&model, &mut g)?;
        let scaled = g.scale(node, 1.0 / terms as f64)?;
        g.backward(scaled)?;
        Ok((g.value(scaled)[0], model.take_grads(&mut g)))
    };
    let (_, analytic) = mean(params).unwrap();
    let mut tensors = params.tensors().to_vec();
    grad_check(&mut tensors, &analytic, |t| Ok(mean(&rebuild(params, t))?.0), 1e-4, 1e-4).unwrap()
}

#[test]
fn pretraining_loss_gradient_matches_finite_differences() {
    let params = tiny(5);
    let seq = random_insert(&[3, 1, 4, 1, 5, 9], 2, 7, PAUSE).unwrap();
    assert_eq!(seq.len(), 8);
    let other = PausedSequence::from_tokens(vec![2, 7, 1, 8, 2, 8, 1, 8], PAUSE);
    let report = check(&params, |m, g| pretrain_batch_loss_node(m, g, &[&seq, &other]));
    assert!(report.passed, "{report:?}");
    assert!(report.checked == params.num_params());
}

#[test]
fn finetuning_loss_gradient_matches_finite_differences() {
    let params = tiny(6);
    let a = FinetuneExample::new(vec![1, 2, 3], vec![4, 5, 14], 2, Placement::Append);
    let b = FinetuneExample::new(vec![6, 7], vec![8, 14], 3, Placement::Prepend);
    let report = check(&params, |m, g| finetune_batch_loss_node(m, g, &[&a, &b], PAUSE));
    assert!(report.passed, "{report:?}");
}

