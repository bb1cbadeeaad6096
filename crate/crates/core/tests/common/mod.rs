//! Oracles shared by the integration tests.
#![allow(dead_code)]

pub fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Recomputes every inter-cluster linkage from the raw points at each step.
pub fn brute_linkage(points: &[(f64, f64)], cutoff: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut link: f64 = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        link = link.max(dist(points[i], points[j]));
                    }
                }
                // clusters are kept sorted by smallest member, so (a, b) order is the tie order
                match best {
                    Some((d, _, _)) if d <= link => {}
                    _ => best = Some((link, a, b)),
                }
            }
        }
        match best {
            Some((d, a, b)) if d <= cutoff => {
                let moved = clusters.remove(b);
                clusters[a].extend(moved);
                clusters[a].sort_unstable();
                clusters.sort_by_key(|c| c[0]);
            }
            _ => break,
        }
    }
    clusters
}
