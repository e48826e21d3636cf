//! Trains a makespan regressor on one platform in normalized units and
//! evaluates zero-/n-shot transfer to a platform with a different
//! frequency range.

use dvfsched::platform::{PlatformSpec, WorkloadSpec};
use dvfsched::transfer::{collect_samples, nshot_transfer, stratified_split, train_source_model};

fn main() {
    let source = PlatformSpec::small(0.0);
    let mut target = PlatformSpec::small(0.0);
    target.freq_table = source.freq_table.iter().map(|f| f * 1.3).collect();
    target.power_dyn_coeff *= 1.1;

    let wl = WorkloadSpec::new("transfer_probe", 0.3, 0.7, 0.2);
    let source_samples = collect_samples(&source, &wl, 4, 7);
    let target_samples = collect_samples(&target, &wl, 4, 8);

    let (train, held) = stratified_split(&source_samples, 7);
    println!("source: {} train / {} held-out samples", train.len(), held.len());
    let model = train_source_model(&train, 7).unwrap();

    println!("{:>6} {:>10} {:>8} {:>10}", "shots", "mape_%", "r2", "spearman");
    for shots in [0usize, 4, 8, 12] {
        let r = nshot_transfer(&model, &train, &target_samples, shots, 7).unwrap();
        println!(
            "{:>6} {:>10.2} {:>8.3} {:>10.3}",
            r.shots, r.mape, r.r2, r.spearman_rho
        );
    }
}
