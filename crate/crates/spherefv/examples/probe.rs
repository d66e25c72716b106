// temporary probe: step-level totality leak in pdgf
use spherefv::grid::Grid;
use spherefv::scheme::{FluxOrder, Integrator, MethodConfig, Scheme};
use spherefv::time::{admissible_dtau, advance};
use spherefv::tumor::{initial_tumor_state, tumor_scenario, TumorCase, TumorProblem};

fn main() {
    let n = 50usize;
    let sc = tumor_scenario(TumorCase::Pdgf);
    let grid = Grid::build(n, 2.0).unwrap();
    let p = TumorProblem { scenario: &sc };
    let method = MethodConfig::new(Scheme::Enhanced, FluxOrder::Upwind, Integrator::ForwardEuler);
    let mut s = initial_tumor_state(&sc, &grid).unwrap();
    for step in 0..4000 {
        let dev = (0..n)
            .map(|i| (s.fields[0][i] + s.fields[1][i] + s.fields[2][i] - 1.0).abs())
            .fold(0.0f64, f64::max);
        let gmin = s.fields[0].iter().cloned().fold(f64::INFINITY, f64::min);
        let mmin = s.fields[2].iter().cloned().fold(f64::INFINITY, f64::min);
        let mmax = s.fields[2].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if step % 200 == 0 || (dev > 1e-10 && step < 30) {
            println!(
                "step={:5} tau={:.6e} R={:.5} dev={:.3e} Gmin={:.3e} Mmin={:.3e} Mmax={:.3e}",
                step, s.tau, s.radius.r, dev, gmin, mmin, mmax
            );
        }
        let dt = admissible_dtau(&p, &s, &grid, &method).unwrap();
        s = advance(&p, &s, &grid, &method, dt).unwrap();
    }
}
