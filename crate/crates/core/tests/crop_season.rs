use chrono::NaiveDate;
use cropcast_core::crop_model::*;

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/default_season.csv");

fn season() -> Vec<CropState> {
    let start = NaiveDate::from_ymd_opt(2023, 3, 1).unwrap();
    let weather: Vec<WeatherDay> = (0..200)
        .map(|i| {
            let f = i as f64 / 200.0;
            WeatherDay::new(start + chrono::Days::new(i), 4.0 + 14.0 * f, 2.5 + 3.5 * f)
        })
        .collect();
    let p = CropParams::default();
    let init = CropState::from_pools(0.0, 200.0, 100.0, 0.0, 80.0, p.sla);
    simulate(&p, &weather, &init).unwrap()
}

fn row(s: &CropState) -> [f64; 6] {
    [s.dvs, s.lai, s.twlv, s.twst, s.twso, s.twrt]
}

// Set CROPCAST_FREEZE_GOLDEN=1 to rewrite the frozen trajectory.
#[test]
fn default_season_matches_the_frozen_trajectory() {
    let traj = season();
    if std::env::var_os("CROPCAST_FREEZE_GOLDEN").is_some() {
        let mut s = String::from("day,dvs,lai,twlv,twst,twso,twrt\n");
        for (t, x) in traj.iter().enumerate() {
            let cells: Vec<String> = row(x).iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&format!("{t},{}\n", cells.join(",")));
        }
        std::fs::write(GOLDEN, s).unwrap();
    }
    let text = std::fs::read_to_string(GOLDEN).unwrap();
    let frozen: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(frozen.len(), traj.len());
    for (t, (f, x)) in frozen.iter().zip(&traj).enumerate() {
        for (a, b) in f.iter().zip(row(x)) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "day {t}: {a} vs {b}");
        }
    }
}

#[test]
fn default_season_lai_peaks_after_flowering_and_fills_grain() {
    let traj = season();
    let (peak, _) = traj
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.lai.total_cmp(&b.1.lai))
        .unwrap();
    let flowering = traj.iter().position(|s| s.dvs >= 1.0).expect("crop reaches flowering");
    assert!(peak > 0 && peak < traj.len() - 1);
    assert!(traj.last().unwrap().lai < traj[peak].lai);
    assert!(traj[peak..].windows(2).any(|w| w[1].lai < w[0].lai && w[0].dvs >= 1.0));
    assert!(flowering < traj.len() - 1);
    assert!(traj.last().unwrap().twso > 0.0);
}
