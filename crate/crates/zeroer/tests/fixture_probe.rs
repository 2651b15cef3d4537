//! scratch probe for fixture difficulty (removed once tuned)
mod support;

use support::benchdata;
use zeroer::blocking::{cross_join, Scope};
use zeroer::eval::GoldLabels;
use zeroer::features::{build_feature_schema, estimate_correlation_subset, featurize};
use zeroer::ingest::{align_schemas, load_table};
use zeroer::model::{fit_no_transitivity, FitOptions};
use zeroer::features::estimate_shared_correlation;

fn cos_flat(a: &zeroer::features::CorrelationMatrix, b: &zeroer::features::CorrelationMatrix) -> f64 {
    let (fa, fb) = (a.full(), b.full());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.d {
        for j in 0..a.d {
            dot += fa[(i, j)] * fb[(i, j)];
            na += fa[(i, j)] * fa[(i, j)];
            nb += fb[(i, j)] * fb[(i, j)];
        }
    }
    dot / (na.sqrt() * nb.sqrt())
}

#[test]
#[ignore]
fn probe_restaurant_structure() {
    let dir = tempfile::tempdir().unwrap();
    let data = benchdata::restaurants(42);
    support::write_dataset(dir.path(), &data);
    let left = load_table(&dir.path().join("left.csv"), "id", b',').unwrap();
    let right = load_table(&dir.path().join("right.csv"), "id", b',').unwrap();
    let gold = GoldLabels::load(&dir.path().join("gold.csv"), Some((&left, &right))).unwrap();
    let schema = align_schemas(&left, &right, None).unwrap();
    for p in &schema.pairs {
        println!("attr {} tag {}", p.left, p.tag);
    }
    let fs = build_feature_schema(&schema);
    println!("d = {}", fs.d);
    let pairs = cross_join(&left, &right, Scope::Cross);
    let x = featurize(&pairs, &left, &right, &fs).unwrap();

    let labels: Vec<bool> = pairs
        .pairs
        .iter()
        .map(|&(a, b)| gold.contains(left.id_of(a as usize), right.id_of(b as usize)))
        .collect();
    let m_rows: Vec<usize> = (0..x.n).filter(|&i| labels[i]).collect();
    let u_rows: Vec<usize> = (0..x.n).filter(|&i| !labels[i]).collect();
    println!("N = {}, M = {}", x.n, m_rows.len());

    let names = fs.feature_names();
    println!("\nclass-conditional means (gold):");
    for j in 0..x.d {
        let mm: f64 = m_rows.iter().map(|&i| x.row(i)[j]).sum::<f64>() / m_rows.len() as f64;
        let mu: f64 = u_rows.iter().map(|&i| x.row(i)[j]).sum::<f64>() / u_rows.len() as f64;
        let vm: f64 = m_rows.iter().map(|&i| (x.row(i)[j] - mm).powi(2)).sum::<f64>() / m_rows.len() as f64;
        let vu: f64 = u_rows.iter().map(|&i| (x.row(i)[j] - mu).powi(2)).sum::<f64>() / u_rows.len() as f64;
        println!("  {:28} mu_M {mm:.3} sd_M {:.3}   mu_U {mu:.3} sd_U {:.3}", names[j], vm.sqrt(), vu.sqrt());
    }

    let r_m = estimate_correlation_subset(&x, &fs, &m_rows);
    let r_u = estimate_correlation_subset(&x, &fs, &u_rows);
    println!("\ncos(R_M, R_U) = {:.4}", cos_flat(&r_m, &r_u));

    // fitted model inspection
    let r = estimate_shared_correlation(&x, &fs);
    let out = fit_no_transitivity(&x, &r, &FitOptions::default()).unwrap();
    println!("\nfitted pi_m {:.6} (true {:.6})", out.params.pi_m, m_rows.len() as f64 / x.n as f64);
    println!("fitted mu_m: {:?}", out.params.mu_m.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    println!("fitted la_m: {:?}", out.params.lambda_m.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    println!("fitted mu_u: {:?}", out.params.mu_u.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    println!("kappa:       {:?}", out.params.kappa.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>());

    // what do the false positives look like
    let mut fps: Vec<usize> = out
        .posteriors
        .matches()
        .into_iter()
        .filter(|&i| !labels[i])
        .collect();
    fps.sort_by(|&a, &b| out.posteriors.get(b).partial_cmp(&out.posteriors.get(a)).unwrap());
    println!("\nfalse positives: {}", fps.len());
    for &i in fps.iter().take(6) {
        let (a, b) = pairs.pairs[i];
        println!(
            "  gamma {:.3}  {} | {}",
            out.posteriors.get(i),
            left.value(a as usize, 1).unwrap_or(""),
            right.value(b as usize, 1).unwrap_or("")
        );
        println!("     x = {:?}", x.row(i).iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    }
}
