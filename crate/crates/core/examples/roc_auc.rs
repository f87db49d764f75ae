//! ROC points and AUC for a handful of scores, including a tie.

use demandscope::data::TravelClass;
use demandscope::matrix::Matrix;
use demandscope::metrics::{binary_auc, macro_ovr_auc, roc_curve};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scores = [0.9, 0.8, 0.7, 0.7, 0.55, 0.4, 0.3, 0.1];
    let labels = [true, true, false, true, false, true, false, false];

    let roc = roc_curve(&scores, &labels)?;
    println!("threshold    fpr    tpr");
    for i in 0..roc.len() {
        println!("{:>9.2} {:>6.3} {:>6.3}", roc.thresholds[i], roc.fpr[i], roc.tpr[i]);
    }
    println!("trapezoid area {:.4}", roc.area());
    println!("rank statistic {:.4}", binary_auc(&scores, &labels)?);

    let probs = Matrix::from_rows(&[
        [0.7, 0.1, 0.1, 0.1],
        [0.2, 0.5, 0.2, 0.1],
        [0.1, 0.2, 0.6, 0.1],
        [0.3, 0.1, 0.2, 0.4],
        [0.4, 0.3, 0.2, 0.1],
        [0.1, 0.3, 0.3, 0.3],
    ]);
    use TravelClass::*;
    let truth = [NoTravel, Moon, Suborbital, Orbital, Moon, NoTravel];
    let auc = macro_ovr_auc(&probs, &truth)?;
    for class in TravelClass::ALL {
        println!("{:<10} one-vs-rest {:.3}", class.name(), auc.per_class[class.index()]);
    }
    println!("macro average {:.3}", auc.macro_auc);
    Ok(())
}
