//! Generates the default synthetic multi-camera dataset and prints its
//! partition sizes and a distance summary.

use toim::euclidean_distance;
use toim::synthdata::{gen_dataset, SynthConfig};

fn main() -> toim::Result<()> {
    let cfg = SynthConfig {
        seed: 7,
        ..SynthConfig::default()
    };
    let data = gen_dataset(&cfg)?;
    println!(
        "train {} samples, query {}, gallery {}, dim {}",
        data.train.len(),
        data.query.len(),
        data.gallery.len(),
        data.observation_dim()
    );

    let (mut intra, mut inter) = (Vec::new(), Vec::new());
    let t = &data.train;
    for i in 0..t.len() {
        for j in (i + 1)..t.len() {
            let d = euclidean_distance(&t.features[i], &t.features[j])?;
            if t.identities[i] == t.identities[j] {
                intra.push(d)
            } else {
                inter.push(d)
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "mean same-identity distance {:.3}, different-identity {:.3}",
        mean(&intra),
        mean(&inter)
    );

    let csv = data.to_csv();
    println!(
        "csv header: {}",
        csv.lines()
            .next()
            .unwrap_or_default()
            .chars()
            .take(40)
            .collect::<String>()
    );
    Ok(())
}
