use vdlab_core::dataset::{generate_synthetic_dataset, load_dataset, write_dataset, Partition};
use vdlab_core::gmm::{fit_gmm, Criterion, GaussianMixture};
use vdlab_core::stats::{distribution_distance, pearson, spearman};
use vdlab_core::workload::{fit_workload, sample_transactions, FittedWorkload, WorkloadFitOptions};
use vdlab_core::{cv::GridSearchOptions, Error};

#[test]
fn fitted_mixture_samples_match_the_source() {
    let train = generate_synthetic_dataset(10_000, Partition::Execution, 1).unwrap();
    let fresh = generate_synthetic_dataset(10_000, Partition::Execution, 2).unwrap();
    let model = fit_gmm(&train.used_gas(), 1, 6, Criterion::Bic, 0).unwrap();
    let sampled = model.sample(10_000, 3).unwrap();
    let ks = distribution_distance(&fresh.used_gas(), &sampled).unwrap().ks_stat;
    assert!(ks < 0.05, "used gas KS {ks}");

    let price = fit_gmm(&train.gas_prices(), 1, 6, Criterion::Bic, 0).unwrap();
    let ks = distribution_distance(&fresh.gas_prices(), &price.sample(10_000, 4).unwrap())
        .unwrap()
        .ks_stat;
    assert!(ks < 0.05, "gas price KS {ks}");
}

#[test]
fn two_draws_from_one_mixture_are_close() {
    let gmm = GaussianMixture::from_components(vec![0.3, 0.7], vec![10.0, 12.0], vec![0.2, 0.5]).unwrap();
    let ks = distribution_distance(&gmm.sample(10_000, 1).unwrap(), &gmm.sample(10_000, 2).unwrap())
        .unwrap()
        .ks_stat;
    assert!(ks < 0.05, "{ks}");
}

#[test]
fn mixture_round_trip_recovers_log_means() {
    let truth = GaussianMixture::from_components(vec![0.4, 0.6], vec![8.0, 12.0], vec![0.25, 0.36]).unwrap();
    let data = truth.sample(100_000, 7).unwrap();
    let fit = fit_gmm(&data, 1, 4, Criterion::Bic, 11).unwrap();
    assert_eq!(fit.k, 2);
    let mut means = fit.means.clone();
    means.sort_by(f64::total_cmp);
    assert!(
        (means[0] - 8.0).abs() < 0.1 && (means[1] - 12.0).abs() < 0.1,
        "{means:?}"
    );
    assert!((fit.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

fn quick_options(seed: u64) -> WorkloadFitOptions {
    WorkloadFitOptions {
        k_max: 4,
        grid: GridSearchOptions {
            trees: vec![10, 30],
            split_budgets: vec![10, 50],
            folds: 5,
            seed,
        },
        seed,
        ..WorkloadFitOptions::default()
    }
}

#[test]
fn fitted_workload_file_round_trips_and_reproduces_samples() {
    let data = generate_synthetic_dataset(3_000, Partition::Execution, 9).unwrap();
    let report = fit_workload(&data, &quick_options(4)).unwrap();
    assert!(report.test.as_ref().unwrap().r2 >= 0.8, "{:?}", report.test);
    assert_eq!(report.train_size + report.test_size, 3_000);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    report.workload.save(&path).unwrap();
    let loaded = FittedWorkload::load(&path).unwrap();
    assert_eq!(loaded, report.workload);

    let a = sample_transactions(&report.workload, 500, 0.3, 1).unwrap();
    let b = sample_transactions(&loaded, 500, 0.3, 1).unwrap();
    assert_eq!(a, b);
    for r in &a {
        assert!(r.used_gas <= r.gas_limit && r.gas_limit <= loaded.block_limit);
    }

    let again = fit_workload(&data, &quick_options(4)).unwrap();
    assert_eq!(again.workload.to_json().unwrap(), report.workload.to_json().unwrap());
}

#[test]
fn tiny_dataset_cannot_be_cross_validated() {
    let data = generate_synthetic_dataset(100, Partition::Execution, 1).unwrap();
    let five = vdlab_core::dataset::Dataset::new(data.records[..5].to_vec(), Partition::Execution, data.source.clone())
        .unwrap();
    let mut opts = quick_options(0);
    opts.grid.folds = 10;
    assert!(fit_workload(&five, &opts).is_err());
}

#[test]
fn dataset_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for partition in [Partition::Execution, Partition::Creation] {
        let data = generate_synthetic_dataset(500, partition, 21).unwrap();
        let path = dir.path().join(format!("{partition}.csv"));
        write_dataset(&path, &data).unwrap();
        let loaded = load_dataset(&path, partition).unwrap();
        assert_eq!(loaded.records, data.records);
        assert_eq!(loaded.partition, partition);
    }
}

#[test]
fn bad_rows_name_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(
        &path,
        "used_gas,gas_limit,gas_price,cpu_time_s\n21000,21000,1e-9,0.001\n50000,60000,1e-9,0.002\n90000,80000,1e-9,0.003\n",
    )
    .unwrap();
    match load_dataset(&path, Partition::Execution) {
        Err(Error::Field { line, field, .. }) => {
            assert_eq!(line, 4);
            assert_eq!(field, "gas_limit");
        }
        other => panic!("{other:?}"),
    }

    std::fs::write(&path, "used_gas,gas_limit,gas_price,cpu_time_s\n").unwrap();
    let err = load_dataset(&path, Partition::Execution).unwrap_err();
    assert!(err.to_string().contains("empty dataset"));
}

#[test]
fn synthetic_cpu_time_is_nonlinear_in_gas() {
    let data = generate_synthetic_dataset(100_000, Partition::Execution, 5).unwrap();
    let gas = data.used_gas();
    let cpu = data.cpu_times();
    assert!(pearson(&gas, &cpu).unwrap() < spearman(&gas, &cpu).unwrap());
    assert!(pearson(&data.gas_prices(), &gas).unwrap().abs() <= 0.05);
}
