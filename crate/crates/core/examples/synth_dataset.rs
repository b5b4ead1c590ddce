//! Generates a synthetic trip log, round-trips it through CSV, and prints
//! what the duration labels look like.

use mobility_unlearn::dataset::{derive_label, generate_synthetic, load_trips, save_trips, LabelSpec, SyntheticSpec};

pub fn run(n_records: usize) -> mobility_unlearn::Result<()> {
    let spec = SyntheticSpec {
        n_records,
        ..Default::default()
    };
    let trips = generate_synthetic(&spec)?;

    let dir = std::env::temp_dir().join(format!("mobunlearn-synth-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("trips.csv");
    save_trips(&path, &trips)?;
    let reloaded = load_trips(&path)?;
    assert_eq!(reloaded, trips);
    std::fs::remove_dir_all(&dir).ok();

    let labels = LabelSpec::default();
    let minutes: Vec<usize> = trips.iter().map(|t| derive_label(t, &labels)).collect();
    let mean = minutes.iter().sum::<usize>() as f64 / minutes.len() as f64;
    let clamped = minutes.iter().filter(|&&m| m == labels.clamp_max_min).count();
    let no_route = trips.iter().filter(|t| t.route_length_m.is_none()).count();
    println!("{} trips, {} classes", trips.len(), labels.n_classes());
    println!("mean duration {mean:.1} min, {clamped} clamped at {} min", labels.clamp_max_min);
    println!("{no_route} trips without a route length (great-circle fallback)");
    for t in trips.iter().take(3) {
        println!(
            "  #{:<4} user {:<6} {:>5.1} min  {:<10} {:?}",
            t.record_id,
            t.user_id,
            t.duration_minutes(),
            t.mobility.to_string(),
            t.note
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> mobility_unlearn::Result<()> {
    run(SyntheticSpec::default().n_records)
}
