//! Train a small SpaceNet on a generated survey and score it on held-out rows.

use demandscope::data::{encode, stratified_kfold};
use demandscope::metrics::macro_ovr_auc;
use demandscope::preprocess::fit_standardizer;
use demandscope::spacenet::{train, ModelConfig, TrainConfig};
use demandscope::synth::{generate, GeneratorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let generated = generate(&GeneratorConfig {
        n_rows: 900,
        seed: 4,
        ..GeneratorConfig::default()
    })?;
    let data = &generated.dataset;
    let signal = &generated.truth.signal_features;

    let plan = stratified_kfold(data.labels(), 4, 0)?;
    let (train_rows, test_rows) = (plan.train_indices(0), plan.test_indices(0));
    let encoded = encode(data).select_features(signal);
    let encoded = fit_standardizer(&encoded, &train_rows)?.apply(&encoded)?;
    let train_x = encoded.values.select_rows(&train_rows);
    let test_x = encoded.values.select_rows(&test_rows);
    let train_y: Vec<_> = train_rows.iter().map(|&i| data.labels()[i]).collect();
    let test_y: Vec<_> = test_rows.iter().map(|&i| data.labels()[i]).collect();

    let model_config = ModelConfig {
        d_model: 16,
        ff_hidden: 32,
        mlp_hidden: 16,
        ..ModelConfig::default()
    };
    let train_config = TrainConfig {
        lr: 0.003,
        epochs: 12,
        ..TrainConfig::default()
    };
    let (model, history) = train(
        &train_x,
        &train_y,
        Some((&test_x, &test_y)),
        &model_config,
        &train_config,
    )?;

    println!(
        "{} tokens per row, {} parameters",
        model.n_features(),
        model.params.n_values()
    );
    println!("initial loss {:.4}", history.initial_loss);
    let val = history.val_loss.as_deref().unwrap_or_default();
    for (epoch, loss) in history.train_loss.iter().enumerate() {
        println!("epoch {:>2}  train {loss:.4}  held-out {:.4}", epoch + 1, val[epoch]);
    }
    let auc = macro_ovr_auc(&model.predict_proba(&test_x)?, &test_y)?;
    println!(
        "held-out macro AUC {:.3}  per class {:.3?}",
        auc.macro_auc, auc.per_class
    );
    Ok(())
}
