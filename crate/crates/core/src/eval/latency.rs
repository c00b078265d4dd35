use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub clusters: usize,
    pub forced: usize,
    pub mean_ms: Option<f64>,
    pub std_ms: Option<f64>,
    pub max_ms: Option<f64>,
    /// Non-forced clusters only.
    pub latencies_ms: Vec<f64>,
    pub forced_latencies_ms: Vec<f64>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// `clusters` yields `(latency_ns, force_finished)` pairs.
pub fn latency_stats(clusters: impl IntoIterator<Item = (u64, bool)>) -> LatencyReport {
    let mut latencies_ms = Vec::new();
    let mut forced_latencies_ms = Vec::new();
    for (ns, forced) in clusters {
        let ms = ns as f64 * 1e-6;
        if forced {
            forced_latencies_ms.push(ms);
        } else {
            latencies_ms.push(ms);
        }
    }
    let stats = mean_std(&latencies_ms);
    LatencyReport {
        clusters: latencies_ms.len() + forced_latencies_ms.len(),
        forced: forced_latencies_ms.len(),
        mean_ms: stats.map(|s| s.0),
        std_ms: stats.map(|s| s.1),
        max_ms: latencies_ms.iter().copied().reduce(f64::max),
        latencies_ms,
        forced_latencies_ms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster() {
        let r = latency_stats([(3_000_000, false)]);
        assert_eq!(r.mean_ms, Some(3.0));
        assert_eq!(r.std_ms, Some(0.0));
    }

    #[test]
    fn population_std() {
        let r = latency_stats([(1_000_000, false), (5_000_000, false), (9_000_000_000, true)]);
        assert_eq!(r.mean_ms, Some(3.0));
        assert_eq!(r.std_ms, Some(2.0));
        assert_eq!(r.forced, 1);
        assert_eq!(r.clusters, 3);
    }

    #[test]
    fn empty_stream() {
        let r = latency_stats([]);
        assert_eq!(r.clusters, 0);
        assert_eq!(r.mean_ms, None);
    }
}
