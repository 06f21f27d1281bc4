//! Seeded generators for the small example datasets shipped under
//! `data/examples`. Each returns CSV text; the bundled files are exactly
//! the output for [`BUNDLED_SEED`].

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal, Poisson};

pub const BUNDLED_SEED: u64 = 2024;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn write_rows(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Clinical records shaped like the Pima diabetes table: 768 rows, eight
/// measurements and a 0/1 outcome. Body mass enters the outcome only
/// through weight/height², and about 5% of insulin readings are missing.
pub fn diabetes(seed: u64) -> String {
    let mut r = rng(seed);
    let pregnancies = Poisson::<f64>::new(3.8).expect("valid");
    let glucose = Normal::<f64>::new(121.0, 30.0).expect("valid");
    let pressure = Normal::<f64>::new(70.0, 12.0).expect("valid");
    let skin = Normal::<f64>::new(29.0, 10.0).expect("valid");
    let insulin = LogNormal::<f64>::new(4.7, 0.6).expect("valid");
    let weight = Normal::<f64>::new(82.0, 16.0).expect("valid");
    let height = Normal::<f64>::new(1.66, 0.08).expect("valid");
    let age = Exp::<f64>::new(1.0 / 12.0).expect("valid");
    let rows = (0..768)
        .map(|_| {
            let preg: f64 = pregnancies.sample(&mut r).min(17.0);
            let glu = glucose.sample(&mut r).clamp(44.0, 199.0).round();
            let bp = pressure.sample(&mut r).clamp(24.0, 122.0).round();
            let st = skin.sample(&mut r).clamp(7.0, 99.0).round();
            let ins: f64 = insulin.sample(&mut r).clamp(14.0, 846.0).round();
            let w = weight.sample(&mut r).clamp(40.0, 160.0);
            let h = height.sample(&mut r).clamp(1.45, 1.95);
            let a = (21.0 + age.sample(&mut r)).min(81.0).floor();
            let bmi = w / (h * h);
            let logit = -9.2 + 0.035 * glu + 0.11 * bmi + 0.02 * a + 0.1 * preg;
            let p = 1.0 / (1.0 + (-logit).exp());
            let outcome = u8::from(r.gen::<f64>() < p);
            let ins_cell = if r.gen::<f64>() < 0.05 { String::new() } else { format!("{ins}") };
            vec![
                format!("{preg}"),
                format!("{glu}"),
                format!("{bp}"),
                format!("{st}"),
                ins_cell,
                format!("{w:.1}"),
                format!("{h:.2}"),
                format!("{a}"),
                outcome.to_string(),
            ]
        })
        .collect();
    write_rows(
        &[
            "pregnancies",
            "glucose",
            "blood_pressure",
            "skin_thickness",
            "insulin",
            "weight",
            "height",
            "age",
            "outcome",
        ],
        rows,
    )
}

/// Regression with a planted order-2 signal: y = x1 / x2² + N(0, 0.05²),
/// x1 ~ U(1, 3), x2 ~ U(0.5, 2), and three unrelated columns.
pub fn planted(seed: u64) -> String {
    let mut r = rng(seed);
    let noise = Normal::<f64>::new(0.0, 0.05).expect("valid");
    let temp = Normal::<f64>::new(20.0, 5.0).expect("valid");
    let rows = (0..200)
        .map(|_| {
            let x1: f64 = r.gen_range(1.0..3.0);
            let x2: f64 = r.gen_range(0.5..2.0);
            let x3: f64 = r.gen_range(20.0..80.0);
            let x4: f64 = temp.sample(&mut r);
            let x5: f64 = r.gen_range(1.0..100.0);
            let y = x1 / (x2 * x2) + noise.sample(&mut r);
            vec![
                format!("{x1:.6}"),
                format!("{x2:.6}"),
                format!("{x3:.6}"),
                format!("{x4:.6}"),
                format!("{x5:.6}"),
                format!("{y:.6}"),
            ]
        })
        .collect();
    write_rows(&["x1", "x2", "x3", "x4", "x5", "y"], rows)
}

/// Daily store records for a binary high-sales label. The columns are
/// chosen so that every bundled rule has something to reject: two
/// temperatures, an inventory stock and a price in dollars.
pub fn retail(seed: u64) -> String {
    let mut r = rng(seed);
    let stores = ["north", "south", "east", "west"];
    let start = NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date");
    let noise = Normal::<f64>::new(0.0, 1.0).expect("valid");
    let rows = (0..320)
        .map(|i| {
            let store = stores[i % stores.len()];
            let date = start + Duration::days((i / stores.len()) as i64);
            let season = ((i / stores.len()) as f64 / 365.0 * std::f64::consts::TAU).cos();
            let tmin = 4.0 - 8.0 * season + 2.0 * noise.sample(&mut r);
            let tmax = tmin + r.gen_range(4.0..12.0);
            let inventory: u32 = r.gen_range(20..400);
            let price: f64 = r.gen_range(2.0..20.0);
            let promo = r.gen_bool(0.3);
            let weekend = matches!(
                chrono::Datelike::weekday(&date),
                chrono::Weekday::Sat | chrono::Weekday::Sun
            );
            let demand = 1.5 * f64::from(u8::from(promo)) + 1.0 * f64::from(u8::from(weekend)) - 0.12 * price
                + 0.004 * f64::from(inventory)
                + 0.05 * (tmax - 10.0)
                + 0.6 * noise.sample(&mut r);
            vec![
                store.to_string(),
                date.format("%Y-%m-%d").to_string(),
                format!("{tmin:.1}"),
                format!("{tmax:.1}"),
                inventory.to_string(),
                format!("{price:.2}"),
                if promo { "yes" } else { "no" }.to_string(),
                if demand > 0.5 { "true" } else { "false" }.to_string(),
            ]
        })
        .collect();
    write_rows(
        &["store", "date", "temp_min_c", "temp_max_c", "inventory", "price", "promo", "high_sales"],
        rows,
    )
}

/// A seeded generator returning CSV text.
pub type Generator = fn(u64) -> String;

/// Name and generator of every bundled example.
pub fn bundled() -> [(&'static str, Generator); 3] {
    [("diabetes", diabetes), ("planted", planted), ("retail", retail)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let d = diabetes(1);
        assert_eq!(d.lines().count(), 769);
        assert_eq!(d.lines().next().unwrap().split(',').count(), 9);
        assert_eq!(planted(1).lines().count(), 201);
        assert_eq!(retail(1).lines().count(), 321);
        assert_eq!(planted(3), planted(3));
        assert_ne!(planted(3), planted(4));
    }
}
