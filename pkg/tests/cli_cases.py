"""CLI runs pinned by golden files in tests/golden."""

CASES: dict[str, list[str]] = {
    "simulate_lorenz.csv": ["simulate", "--system", "lorenz", "--x0", "1,1,1", "--t-end", "2",
                            "--sample-every", "0.1", "--method", "rk4_fixed", "--dt", "0.01"],
    "simulate_henon.csv": ["simulate", "--system", "henon", "--x0", "0,0", "--n-iter", "50"],
    "equilibria_lorenz.json": ["equilibria", "--system", "lorenz"],
    "lyapunov_henon.json": ["lyapunov", "--system", "henon", "--x0", "0.1,0.1", "--N", "2000",
                            "--transient", "100"],
    "lyapunov_tent.json": ["lyapunov", "--system", "tent", "--x0", "0.1234", "--N", "40"],
    "bifurcate_pitchfork.json": ["bifurcate", "--system", "pitchfork_demo", "--x0", "0,0",
                                 "--lam-start", "-0.5", "--lam-end", "0.5", "--step", "0.05"],
    "bifurcate_lorenz.csv": ["bifurcate", "--system", "lorenz", "--x0", "0,0,0", "--param", "r",
                             "--lam-start", "0.5", "--lam-end", "1.5", "--step", "0.1",
                             "--format", "csv"],
    "diagram_logistic.csv": ["diagram", "--system", "logistic", "--range", "2.8:4.0",
                             "--samples", "40", "--transient", "300", "--keep", "16", "--x0", "0.5"],
    "cascade_logistic.csv": ["cascade", "--system", "logistic", "--max-n", "6"],
    "poincare_duffing.csv": ["poincare", "--system", "duffing_forced", "--x0", "1,0,0",
                             "--n-returns", "5"],
    "floquet_vdp.json": ["floquet", "--system", "van_der_pol"],
    "floquet_hill.json": ["floquet", "--system", "hill", "--set", "Omega=1.5"],
    "hill_chart.csv": ["hill-chart", "--samples", "12"],
    "manifold_center.json": ["manifold", "--system", "center_example", "--set", "c=0.5",
                             "--which", "center", "--order", "5"],
    "manifold_unstable.json": ["manifold", "--system", "unstable_example", "--which", "unstable",
                               "--order", "4"],
    "normalform_hopf.json": ["normalform", "--mode", "resonances", "--eigs", "2j,-2j", "--k", "3"],
    "normalform_resonant.json": ["normalform", "--mode", "resonances", "--eigs", "2,1", "--k", "2"],
    "normalform_conjugacy.json": ["normalform", "--mode", "conjugacy", "--omega", "1.3"],
    "dimension_cantor.json": ["dimension", "--source", "cantor", "--depth", "10"],
    "symbolic_periodic.json": ["symbolic", "--mode", "periodic", "--p", "3"],
    "symbolic_itinerary.json": ["symbolic", "--mode", "itinerary", "--x", "2/5", "--n", "8"],
    "symbolic_cantor.json": ["symbolic", "--mode", "cantor", "--x", "1/4"],
    "symbolic_horseshoe.json": ["symbolic", "--mode", "horseshoe", "--word", "+--,-+",
                                "--lam", "1/3", "--mu", "3"],
    "attractor_henon.csv": ["attractor", "--system", "henon", "--N", "500", "--transient", "100"],
    "attractor_lorenz.csv": ["attractor", "--system", "lorenz", "--t-end", "1", "--sample-every", "0.05"],
}
