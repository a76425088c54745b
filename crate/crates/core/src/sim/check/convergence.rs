use super::super::trace::Trace;
use super::{correct_replicas, final_histories, Status, Verdict};

/// Passes iff every correct replica ends with the same history. Only
/// meaningful once the run is quiescent.
pub fn check_convergence(trace: &Trace) -> Verdict {
    const NAME: &str = "convergence";
    if !trace.is_quiescent() {
        return Verdict::new(NAME, Status::Indeterminate, "trace ends with messages in transit");
    }
    let correct = correct_replicas(trace);
    let finals = final_histories(trace);
    let mut histories = correct.iter().map(|r| (*r, finals[r]));
    let Some((first, reference)) = histories.next() else {
        return Verdict::new(NAME, Status::Pass, "no correct replica");
    };
    let violations: Vec<String> = histories
        .filter(|(_, h)| h != &reference)
        .map(|(r, h)| {
            let common = super::common_prefix_len(reference, h);
            format!(
                "replica {r} differs from replica {first} at position {common} ({} vs {} commands)",
                h.len(),
                reference.len()
            )
        })
        .collect();
    Verdict::from_violations(NAME, violations, format!("{} commands", reference.len()))
}
