//! Oversample minority classes and check that every synthetic point lies on
//! a segment between two same-class originals.

use demandscope::augment::{interpolate, smote, SmoteParams};
use demandscope::data::{class_counts, TravelClass};
use demandscope::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:?}", interpolate(&[0.0, 1.0], &[2.0, 3.0], 0.25));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sizes = [
        (TravelClass::NoTravel, 120),
        (TravelClass::Moon, 30),
        (TravelClass::Suborbital, 20),
        (TravelClass::Orbital, 10),
    ];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (class, n) in sizes {
        let centre = class.index() as f64 * 2.0;
        for _ in 0..n {
            rows.push(vec![
                centre + rng.gen_range(-1.0..1.0),
                -centre + rng.gen_range(-1.0..1.0),
            ]);
            labels.push(class);
        }
    }
    let values = Matrix::from_rows(&rows);
    let out = smote(
        &values,
        &labels,
        &SmoteParams {
            seed: 9,
            ..SmoteParams::default()
        },
    )?;

    println!("before {:?}", class_counts(&labels));
    println!("after  {:?}", class_counts(&out.labels));

    let mut worst: f64 = 0.0;
    for (i, record) in out.log.iter().enumerate() {
        let row = out.values.row(values.rows() + i);
        let expect = interpolate(values.row(record.parent), values.row(record.neighbor), record.lambda);
        for (a, b) in row.iter().zip(&expect) {
            worst = worst.max((a - b).abs());
        }
        assert_eq!(labels[record.parent], record.class);
        assert_eq!(labels[record.neighbor], record.class);
    }
    println!(
        "{} synthetic rows, worst reconstruction error {worst:.1e}",
        out.log.len()
    );
    Ok(())
}
