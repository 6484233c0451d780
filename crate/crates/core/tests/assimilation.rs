use chrono::NaiveDate;
use cropcast_core::assimilation::*;
use cropcast_core::crop_model::*;
use cropcast_core::observation::{Observation, ObservationSeries};
use cropcast_core::rng::stream;
use rand_distr::{Distribution, StandardNormal};

fn weather(days: usize) -> Vec<WeatherDay> {
    let start = NaiveDate::from_ymd_opt(2023, 3, 1).unwrap();
    (0..days)
        .map(|i| {
            let f = i as f64 / days as f64;
            WeatherDay::new(start + chrono::Days::new(i as u64), 4.0 + 14.0 * f, 2.5 + 3.5 * f)
        })
        .collect()
}

fn normal(rng: &mut cropcast_core::rng::Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn initial_state(scale: f64, sla: f64) -> CropState {
    CropState::from_pools(0.0, 200.0 * scale, 100.0 * scale, 0.0, 80.0 * scale, sla)
}

fn crop_ensemble(sla: f64, spread: f64, seed: u64) -> Ensemble {
    let mut rng = stream(seed, 77);
    let members: Vec<Vec<f64>> = (0..50)
        .map(|_| initial_state(1.0 + spread * normal(&mut rng), sla).to_array().to_vec())
        .collect();
    Ensemble::from_members(&members).unwrap()
}

struct Twin {
    weather: Vec<WeatherDay>,
    truth: Vec<CropState>,
    background: CropParams,
    obs: ObservationSeries,
    ens: Ensemble,
}

/// Truth with nominal parameters, background with light-use efficiency
/// 15% high, seven LAI observations with σ = 0.3.
fn twin(seed: u64) -> Twin {
    let weather = weather(200);
    let truth_p = CropParams::default();
    let truth = simulate(&truth_p, &weather, &initial_state(1.0, truth_p.sla)).unwrap();
    let mut background = truth_p.clone();
    background.rue *= 1.15;
    let mut rng = stream(seed, 5);
    let obs = ObservationSeries::new(
        (0..7)
            .map(|i| {
                let t = 40 + 20 * i;
                Observation::scalar(t, LAI, truth[t].lai + 0.3 * normal(&mut rng), 0.09).unwrap()
            })
            .collect(),
    )
    .unwrap();
    let ens = crop_ensemble(background.sla, 0.1, seed);
    Twin { weather, truth, background, obs, ens }
}

fn lai_rmse(run: &AssimRun, truth: &[CropState]) -> f64 {
    let se: f64 = run.means.iter().zip(truth).map(|(m, s)| (m[LAI] - s.lai).powi(2)).sum();
    (se / truth.len() as f64).sqrt()
}

#[test]
fn every_method_beats_the_open_loop_on_lai() {
    let tw = twin(1);
    let dynamics = CropDynamics::new(&tw.background, &tw.weather);
    let cfg = AssimConfig { seed: 1, ..AssimConfig::crop_default(200) };
    let open = lai_rmse(&open_loop_run(&dynamics, &tw.ens, &cfg).unwrap(), &tw.truth);
    let ww = lai_rmse(&ww4ves_run(&dynamics, &tw.ens, &tw.obs, &cfg).unwrap(), &tw.truth);
    assert!(ww < open, "ww4ves {ww} open {open}");
    for m in [Method::Enkf, Method::Enkf4dvar] {
        let a = lai_rmse(&baseline_run(m, &dynamics, &tw.ens, &tw.obs, &cfg).unwrap(), &tw.truth);
        assert!(a < open, "{m} {a} open {open}");
    }
}

#[test]
fn no_observations_reproduces_the_open_loop() {
    let tw = twin(2);
    let dynamics = CropDynamics::new(&tw.background, &tw.weather);
    let cfg = AssimConfig { seed: 2, ..AssimConfig::crop_default(200) };
    let open = open_loop_run(&dynamics, &tw.ens, &cfg).unwrap();
    let empty = ObservationSeries::empty();
    for m in [Method::Ww4ves, Method::Enkf, Method::Enkf4dvar] {
        let run = run_method(m, &dynamics, &tw.ens, &empty, &cfg).unwrap();
        assert_eq!(run.means, open.means);
        assert_eq!(run.ensemble, open.ensemble);
        assert!(run.diagnostics.windows.iter().all(|w| w.tw == cfg.tw0));
    }
}

#[test]
fn precise_observation_is_matched_by_the_filters() {
    let tw = twin(3);
    let dynamics = CropDynamics::new(&tw.background, &tw.weather);
    let cfg = AssimConfig { seed: 3, ..AssimConfig::crop_default(200) };
    for t in [5, 40, 100] {
        let obs = ObservationSeries::new(vec![Observation::scalar(t, LAI, 1.0, 1e-12).unwrap()]).unwrap();
        for m in [Method::Enkf, Method::Enkf4dvar] {
            let run = baseline_run(m, &dynamics, &tw.ens, &obs, &cfg).unwrap();
            assert!((run.means[t][LAI] - 1.0).abs() < 1e-4, "{m} t={t}: {}", run.means[t][LAI]);
        }
    }
}

/// With a precise observation at the start of the season the variational
/// step places the mean on the observation; the blended update then moves
/// it by only α = 1/(tr R + tr P), which is small for a developed canopy.
#[test]
fn precise_observation_at_window_start_is_matched_by_ww4ves() {
    let weather = weather(60);
    let p = CropParams::default();
    let mut rng = stream(4, 1);
    let members: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            let f = 1.0 + 0.1 * normal(&mut rng);
            CropState::from_pools(0.8, 1200.0 * f, 1500.0 * f, 0.0, 500.0 * f, p.sla).to_array().to_vec()
        })
        .collect();
    let ens = Ensemble::from_members(&members).unwrap();
    let dynamics = CropDynamics::new(&p, &weather);
    let cfg = AssimConfig { seed: 4, ..AssimConfig::crop_default(60) };
    let obs = ObservationSeries::new(vec![Observation::scalar(0, LAI, 2.0, 1e-12).unwrap()]).unwrap();
    let run = ww4ves_run(&dynamics, &ens, &obs, &cfg).unwrap();
    let w = &run.diagnostics.windows[0];
    assert!(w.alpha[0] < 1e-4);
    assert!((run.means[0][LAI] - 2.0).abs() < 1e-4, "{}", run.means[0][LAI]);
}

/// Between window starts the mean follows the blended update exactly.
#[test]
fn ww4ves_mean_update_is_the_weighted_blend() {
    let tw = twin(5);
    let dynamics = CropDynamics::new(&tw.background, &tw.weather);
    let cfg = AssimConfig { seed: 5, ..AssimConfig::crop_default(200) };
    let run = ww4ves_run(&dynamics, &tw.ens, &tw.obs, &cfg).unwrap();
    for w in &run.diagnostics.windows {
        for ((b, a), alpha) in w.background.iter().zip(&w.analysis).zip(&w.alpha) {
            assert!(*alpha > 0.0 && *alpha < 1.0);
            assert!((a - b).abs() <= alpha * b.abs().max(1.0) * 10.0);
        }
    }
}

#[test]
fn runs_are_deterministic_per_seed() {
    let tw = twin(6);
    let dynamics = CropDynamics::new(&tw.background, &tw.weather);
    let cfg = AssimConfig { seed: 6, ..AssimConfig::crop_default(200) };
    for m in Method::ALL {
        let a = run_method(m, &dynamics, &tw.ens, &tw.obs, &cfg).unwrap();
        let b = run_method(m, &dynamics, &tw.ens, &tw.obs, &cfg).unwrap();
        assert_eq!(a, b);
    }
    let other = AssimConfig { seed: 7, ..cfg.clone() };
    assert_ne!(
        run_method(Method::Enkf, &dynamics, &tw.ens, &tw.obs, &cfg).unwrap().means,
        run_method(Method::Enkf, &dynamics, &tw.ens, &tw.obs, &other).unwrap().means
    );
}

#[test]
fn windows_tile_the_season_within_bounds() {
    let tw = twin(7);
    let dynamics = CropDynamics::new(&tw.background, &tw.weather);
    for beta in [0.0, 0.5, 2.0] {
        let cfg = AssimConfig { seed: 7, beta, tw_max: 30, ..AssimConfig::crop_default(200) };
        for m in Method::ALL {
            let run = run_method(m, &dynamics, &tw.ens, &tw.obs, &cfg).unwrap();
            let ws = &run.diagnostics.windows;
            assert_eq!(ws[0].start, 0);
            assert_eq!(ws.last().unwrap().end, 200);
            for pair in ws.windows(2) {
                assert_eq!(pair[0].end, pair[1].start);
            }
            for w in ws {
                assert!((cfg.tw_min..=cfg.tw_max).contains(&w.tw));
                assert!(w.end - w.start <= w.tw);
            }
            if m != Method::Ww4ves || beta == 0.0 {
                assert!(ws.iter().all(|w| w.tw == cfg.tw0));
            }
        }
    }
}

#[test]
fn analysis_states_stay_physical() {
    let tw = twin(8);
    let dynamics = CropDynamics::new(&tw.background, &tw.weather);
    let cfg = AssimConfig { seed: 8, ..AssimConfig::crop_default(200) };
    for m in Method::ALL {
        let run = run_method(m, &dynamics, &tw.ens, &tw.obs, &cfg).unwrap();
        for x in run.ensemble.members() {
            CropState::from_slice(x).validate().unwrap();
            assert!((x[LAI] - tw.background.sla * x[TWLV]).abs() < 1e-12);
        }
        for mean in &run.means {
            assert!(mean.iter().all(|v| v.is_finite() && *v >= 0.0));
            assert!(mean[DVS] <= MAX_DVS);
        }
    }
}

#[test]
fn noise_free_propagation_composes_the_model() {
    let id = LinearDynamics::identity(3, 5);
    let mut x = [1.0, -2.0, 3.5];
    propagate_member(&id, 0, &mut x, &[0.0; 3]).unwrap();
    assert_eq!(x, [1.0, -2.0, 3.5]);

    let w = weather(10);
    let p = CropParams::default();
    let dynamics = CropDynamics::new(&p, &w);
    let s0 = initial_state(1.0, p.sla);
    let mut x = s0.to_array();
    propagate_member(&dynamics, 3, &mut x, &[0.0; STATE_DIM]).unwrap();
    assert_eq!(CropState::from_slice(&x), step(&s0, &w[3], &p).unwrap());

    let one = LinearDynamics::scalar(1.0, 0.0, 1);
    let mut x = [1.0];
    propagate_member(&one, 0, &mut x, &[0.25]).unwrap();
    assert_eq!(x, [1.25]);
    assert!(propagate_member(&one, 0, &mut x, &[0.1, 0.2]).is_err());
}

#[test]
fn observations_outside_the_season_are_rejected() {
    let tw = twin(9);
    let dynamics = CropDynamics::new(&tw.background, &tw.weather);
    let cfg = AssimConfig::crop_default(200);
    let late = ObservationSeries::new(vec![Observation::scalar(201, LAI, 1.0, 0.1).unwrap()]).unwrap();
    assert!(ww4ves_run(&dynamics, &tw.ens, &late, &cfg).is_err());
    assert!(baseline_run(Method::OpenLoop, &dynamics, &tw.ens, &tw.obs, &cfg).is_err());
}

struct KalmanStep {
    mean: f64,
    var: f64,
}

/// Closed-form filter for x' = a x + c + N(0, q), y = x + N(0, r).
fn kalman(m0: f64, p0: f64, a: f64, c: f64, q: f64, r: f64, ys: &[f64]) -> Vec<KalmanStep> {
    let (mut m, mut p) = (m0, p0);
    ys.iter()
        .map(|y| {
            m = a * m + c;
            p = a * a * p + q;
            let k = p / (p + r);
            m += k * (y - m);
            p *= 1.0 - k;
            KalmanStep { mean: m, var: p }
        })
        .collect()
}

fn ensemble_filter(esrf: bool) -> (Vec<KalmanStep>, Vec<(f64, f64)>) {
    let (a, c, q, r, m0, p0): (f64, f64, f64, f64, f64, f64) = (0.95, 0.5, 0.1, 0.5, 8.0, 1.0);
    let steps = 50;
    let mut rng = stream(11, 0);
    let mut x = m0 + p0.sqrt() * normal(&mut rng);
    let ys: Vec<f64> = (0..steps)
        .map(|_| {
            x = a * x + c + q.sqrt() * normal(&mut rng);
            x + r.sqrt() * normal(&mut rng)
        })
        .collect();
    let oracle = kalman(m0, p0, a, c, q, r, &ys);

    let k = 2000;
    let init: Vec<f64> = (0..k).map(|_| m0 + p0.sqrt() * normal(&mut rng)).collect();
    let mut ens = Ensemble::from_scalars(&init).unwrap();
    let dynamics = LinearDynamics::scalar(a, c, steps);
    let mut member_rngs: Vec<_> = (0..k as u64).map(|i| stream(12, i)).collect();
    let mut out = Vec::new();
    for (t, y) in ys.iter().enumerate() {
        for (j, rng) in member_rngs.iter_mut().enumerate() {
            let eta = [q.sqrt() * normal(rng)];
            propagate_member(&dynamics, t, ens.member_mut(j), &eta).unwrap();
        }
        let o = Observation::scalar(t + 1, 0, *y, r).unwrap();
        ens = if esrf {
            esrf_observe(&ens, &o, 1.0, 0.0).unwrap()
        } else {
            enkf_observe(&ens, &o, 1.0, 0.0, &mut member_rngs).unwrap()
        };
        let (m, p) = ensemble_mean_cov(&ens).unwrap();
        out.push((m[0], p.matrix()[(0, 0)]));
    }
    (oracle, out)
}

#[test]
fn square_root_filter_matches_the_kalman_filter() {
    let (oracle, ens) = ensemble_filter(true);
    for (o, (m, v)) in oracle.iter().zip(&ens) {
        assert!((m - o.mean).abs() <= 0.05 * o.mean.abs(), "mean {m} vs {}", o.mean);
        assert!((v - o.var).abs() <= 0.10 * o.var, "var {v} vs {}", o.var);
    }
}

/// The perturbed-observation filter carries extra sampling noise in its
/// spread, so the variance is checked for bias over the run rather than
/// step by step.
#[test]
fn perturbed_observation_filter_matches_the_kalman_filter() {
    let (oracle, ens) = ensemble_filter(false);
    let mut rel = 0.0;
    for (o, (m, v)) in oracle.iter().zip(&ens) {
        assert!((m - o.mean).abs() <= 0.05 * o.mean.abs(), "mean {m} vs {}", o.mean);
        rel += (v - o.var) / o.var;
    }
    let bias = rel / oracle.len() as f64;
    assert!(bias.abs() < 0.03, "variance bias {bias}");
}
