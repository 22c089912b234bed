use crate::analytics::VerificationMode;
use crate::workload::TransactionRecord;

/// Longest-processing-time-first list schedule: tasks in decreasing order,
/// each to the processor that frees up first (lowest index on ties).
pub fn lpt_makespan(times: &[f64], processors: u32) -> f64 {
    let p = processors.max(1) as usize;
    if times.is_empty() {
        return 0.0;
    }
    if p == 1 {
        return times.iter().sum();
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut loads = vec![0.0f64; p.min(sorted.len())];
    for t in sorted {
        let (i, _) = loads.iter().enumerate().fold(
            (0, f64::INFINITY),
            |best, (i, &l)| if l < best.1 { (i, l) } else { best },
        );
        loads[i] += t;
    }
    loads.into_iter().fold(0.0, f64::max)
}

/// Time to re-execute `txs`. In parallel mode the non-conflicting
/// transactions are spread over `processors` and the conflicting ones then
/// run one after another.
pub fn verification_time(txs: &[TransactionRecord], mode: VerificationMode, processors: u32) -> f64 {
    let sequential = || txs.iter().map(|t| t.cpu_time).sum::<f64>();
    match mode {
        VerificationMode::Sequential => sequential(),
        VerificationMode::Parallel if processors <= 1 => sequential(),
        VerificationMode::Parallel => {
            let free: Vec<f64> = txs.iter().filter(|t| !t.conflicting).map(|t| t.cpu_time).collect();
            let serial: f64 = txs.iter().filter(|t| t.conflicting).map(|t| t.cpu_time).sum();
            lpt_makespan(&free, processors) + serial
        }
    }
}
