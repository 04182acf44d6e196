use nutriscreen::models::sigmoid;
use nutriscreen::select::{aggregate, boruta, rfe, BorutaDecision, BorutaParams, BorutaStatus, Method, MethodScore, RfeBase};
use nutriscreen::{rng, Dataset};
use rand::Rng as _;
use rand_distr::StandardNormal;

/// Columns 0..k carry signal, the rest are noise.
fn signal_and_noise(n: usize, k: usize, noise: usize, seed: u64) -> Dataset {
    let mut r = rng::rng(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..k + noise).map(|_| r.sample::<f64, _>(StandardNormal)).collect()).collect();
    let y = rows
        .iter()
        .map(|x| {
            let z: f64 = x[..k].iter().enumerate().map(|(j, v)| (1.5 - 0.3 * j as f64) * v).sum();
            u8::from(r.random::<f64>() < sigmoid(z))
        })
        .collect();
    Dataset::from_rows(&rows, y).unwrap()
}

#[test]
fn rfe_eliminates_noise_first() {
    let ds = signal_and_noise(800, 3, 4, 1);
    for base in [RfeBase::Logreg, RfeBase::Gbdt] {
        let s = rfe(&ds, base, 1, 3).unwrap();
        // informative columns hold the three best ranks
        let mut top: Vec<usize> = s.ranks[..3].to_vec();
        top.sort_unstable();
        assert_eq!(top, [1, 2, 3], "{base:?}: {:?}", s.ranks);
    }
}

#[test]
fn boruta_confirms_a_label_copy() {
    let base = signal_and_noise(400, 0, 5, 2);
    let mut r = rng::rng(9);
    let y: Vec<u8> = (0..400).map(|_| r.random_range(0..2)).collect();
    let copy: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let rows: Vec<Vec<f64>> = base
        .rows()
        .zip(&copy)
        .map(|(row, &c)| {
            let mut v = vec![c];
            v.extend_from_slice(row);
            v
        })
        .collect();
    let ds = Dataset::from_rows(&rows, y).unwrap();
    let mut params = BorutaParams { iterations: 30, ..BorutaParams::default() };
    params.forest.n_trees = 40;
    let d = boruta(&ds, &params, 4).unwrap();
    assert_eq!(d.status[0], BorutaStatus::Confirmed);
    assert_eq!(d.hit_counts[0], 30);
    assert!(d.status[1..].iter().all(|&s| s != BorutaStatus::Confirmed), "{:?}", d.status);
}

#[test]
fn consensus_rule_and_overrides() {
    let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    let scores = vec![
        MethodScore::from_scores(Method::ChiSquare, names.clone(), vec![4.0, 3.0, 2.0, 1.0]),
        MethodScore::from_ranking(Method::RfeLogreg, names.clone(), &[0, 2, 1, 3]),
    ];
    let d = BorutaDecision {
        features: names.clone(),
        status: vec![BorutaStatus::Confirmed, BorutaStatus::Tentative, BorutaStatus::Rejected, BorutaStatus::Rejected],
        hit_counts: vec![20, 10, 0, 0],
        iterations: 20,
        alpha: 0.05,
        confirm_at: 18,
        reject_at: Some(2),
    };
    let c = aggregate(&scores, &d, 2.5, &["c".to_string(), "d".to_string()]).unwrap();
    assert_eq!(c.avg_rank, vec![1.0, 2.5, 2.5, 4.0]);
    // a: confirmed; c: override within the rank cut; b: tentative without override; d: above the cut
    assert_eq!(c.selected_features(), ["a", "c"]);
    let other = vec![MethodScore::from_scores(Method::ChiSquare, names[..3].to_vec(), vec![1.0, 2.0, 3.0])];
    assert!(aggregate(&other, &d, 2.5, &[]).is_err());
}
