use crate::error::{CliError, CliResult};
use crate::output::{Input, Run};
use crate::plot::Series;
use crate::scenario::{Method, Scenario};
use crate::{AbsorbArgs, BathArgs, BcfArgs, ChainArgs, Command, CompareArgs, ConventionalArgs, FitArgs, HeomCostArgs, PeaksArgs};
use bathsmith_core::bcf::{bcf_distance, bcf_quadrature, count_peaks, filtered_spectrum, SpectrumGrid};
use bathsmith_core::chainmap::{chain_length_for_horizon, chain_to_star, discrete_bcf, lanczos_coefficients, Measure};
use bathsmith_core::coarsegrain::{conventional_coarse_grain, fit_effective, EffectiveEnvironment, FitOptions};
use bathsmith_core::csvio::{correlation_csv, spectrum_csv, write_table, Metadata};
use bathsmith_core::dynamics::{
    absorption_from_correlation, cumulant_correlation, dimer_scan, disorder_ensemble, monomer_absorption,
    spectral_overlap, EnsembleOptions,
};
use bathsmith_core::estimator::{grouped, heom_count, heom_memory, human_bytes, parse_range, HeomCostQuery};
use bathsmith_core::units::{angular, from_angular};
use bathsmith_core::{AbsorptionSpectrum, BathParameters, CorrelationFunction, DipoleCorrelation, TimeGrid};
use serde::Serialize;

pub fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Bcf(a) => bcf(a),
        Command::Fit(a) => fit(a),
        Command::Conventional(a) => conventional(a),
        Command::Chain(a) => chain(a),
        Command::Absorb(a) => absorb(a),
        Command::HeomCost(a) => heom_cost(a),
        Command::Compare(a) => compare(a),
        Command::Peaks(a) => peaks(a),
    }
}

fn bath_parameters(b: &BathArgs) -> CliResult<BathParameters> {
    let mut p = BathParameters::new(b.temperature, b.tau)?;
    if let Some(s) = b.sigma {
        p = p.with_sigma(s)?;
    }
    if let Some(dt) = b.dt {
        p = p.with_dt(dt)?;
    }
    if let Some(t) = b.t_max {
        p = p.with_t_max(t)?;
    }
    Ok(p)
}

fn write_correlation(run: &mut Run, name: &str, c: &CorrelationFunction, meta: Metadata) -> CliResult<()> {
    let t = c.times();
    let re: Vec<f64> = c.values.iter().map(|v| v.re).collect();
    let im: Vec<f64> = c.values.iter().map(|v| v.im).collect();
    let series = [Series { label: "Re", x: &t, y: &re }, Series { label: "Im", x: &t, y: &im }];
    run.write_csv(name, &correlation_csv(c, meta), &series, "t (fs)", "C(t) (cm-2)")
}

fn write_dipole(run: &mut Run, name: &str, d: &DipoleCorrelation, meta: Metadata) -> CliResult<()> {
    let mut meta = meta.with("kind", "dipole-correlation").with("carrier_cm1", d.carrier).with("samples", d.n_samples);
    if let Some(w) = d.window_sigma {
        meta = meta.with("window_sigma_fs", w);
    }
    let t: Vec<f64> = (0..d.len()).map(|j| d.time(j)).collect();
    let re: Vec<f64> = d.values.iter().map(|v| v.re).collect();
    let im: Vec<f64> = d.values.iter().map(|v| v.im).collect();
    let rows = (0..d.len()).map(|j| vec![t[j], re[j], im[j]]);
    let text = write_table(&meta, &["t_fs", "re", "im"], rows);
    let series = [Series { label: "Re", x: &t, y: &re }, Series { label: "Im", x: &t, y: &im }];
    run.write_csv(name, &text, &series, "t (fs)", "d(t), rotating frame")
}

fn write_absorption(run: &mut Run, name: &str, s: &AbsorptionSpectrum, meta: Metadata) -> CliResult<()> {
    let mut meta = meta.with("kind", "absorption").with("label", &s.label).with("samples", s.n_samples);
    if let Some(w) = s.window_sigma {
        meta = meta.with("window_sigma_fs", w);
    }
    if let Some(seed) = s.seed {
        meta = meta.with("seed", seed);
    }
    if s.ringing > 0 {
        meta = meta.with("ringing_points", s.ringing);
    }
    for w in &s.warnings {
        meta = meta.with("warning", w);
    }
    let rows = s.omega.iter().zip(&s.intensity).map(|(&w, &a)| vec![w, a]);
    let text = write_table(&meta, &["omega_cm1", "absorption"], rows);
    let series = [Series { label: &s.label, x: &s.omega, y: &s.intensity }];
    run.write_csv(name, &text, &series, "frequency (cm-1)", "absorption (arb.)")
}

fn bcf(a: BcfArgs) -> CliResult<()> {
    let input = Input::read(&a.model)?;
    let model = input.model()?;
    let params = bath_parameters(&a.bath)?;
    let mut run = Run::new(&a.out.out, a.out.plot)?;
    run.input(&input);
    let c = bcf_quadrature(&model, &params)?;
    let spec = filtered_spectrum(&model, &params)?;
    let census = count_peaks(&spec, a.prominence)?;
    let meta = || Metadata::new().with("model", &input.name).with("tau_fs", params.tau);
    write_correlation(&mut run, "correlation.csv", &c, meta())?;
    let series = [Series { label: &spec.label, x: &spec.omega, y: &spec.values }];
    run.write_csv("spectrum.csv", &spectrum_csv(&spec, meta()), &series, "frequency (cm-1)", "filtered spectrum (cm-1)")?;
    run.write_json("peaks.json", &census)?;
    for w in &spec.warnings {
        eprintln!("warning: {w}");
    }
    println!("{} points to {} fs; {} peaks above {:.1e} of the maximum", c.len(), c.t_max(), census.count(), a.prominence);
    run.finish()?;
    Ok(())
}

fn print_environment(env: &EffectiveEnvironment) {
    println!("{:>12} {:>12} {:>12}", "omega_cm1", "hr", "gamma_cm1");
    for l in &env.lorentzians {
        println!("{:>12.3} {:>12.6} {:>12.3}", l.omega, l.hr, l.gamma);
    }
    println!("reorganization energy {:.6} cm-1 (relative residual {:.2e})", env.reorganization(), env.reorg_residual());
    println!("Huang-Rhys factor {:.6} (relative residual {:.2e})", env.huang_rhys(), env.hr_residual());
}

fn fit(a: FitArgs) -> CliResult<()> {
    let input = Input::read(&a.model)?;
    let model = input.model()?;
    let mut run = Run::new(&a.out.out, a.out.plot)?;
    run.input(&input);
    run.seed(a.seed);
    let opts = FitOptions::new(a.temperature, a.tau, a.peaks)
        .with_seed(a.seed)
        .with_starts(a.starts)
        .with_keep_ar(!a.fit_continuum);
    let env = fit_effective(&model, &opts)?;
    run.write("effective.json", &env.to_json())?;
    run.write_json("report.json", &env.report())?;
    print_environment(&env);
    if let Some(r) = &env.fit_report {
        println!("objective {:.3e} after {} iterations (start {} of {})", r.objective, r.iterations, r.best_start, r.starts);
    }
    run.finish()?;
    Ok(())
}

fn conventional(a: ConventionalArgs) -> CliResult<()> {
    let input = Input::read(&a.model)?;
    let model = input.model()?;
    let mut run = Run::new(&a.out.out, a.out.plot)?;
    run.input(&input);
    let gamma = a.gamma.unwrap_or_else(|| from_angular(1.0 / 20.0));
    let env = conventional_coarse_grain(&model, a.omega, gamma)?;
    run.write("conventional.json", &env.to_json())?;
    run.write_json("report.json", &env.report())?;
    print_environment(&env);
    run.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct ChainSummary {
    length: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon_fs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distance: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    trace: Vec<(usize, f64)>,
    total_weight_cm2: f64,
}

fn chain(a: ChainArgs) -> CliResult<()> {
    let input = Input::read(&a.model)?;
    let model = input.model()?;
    let mut run = Run::new(&a.out.out, a.out.plot)?;
    run.input(&input);
    let measure = Measure::thermalized(&model, a.temperature, a.support)?;
    let mut summary =
        ChainSummary { length: 0, horizon_fs: a.horizon, distance: None, trace: vec![], total_weight_cm2: measure.total() };
    let length = match (a.length, a.horizon) {
        (Some(n), _) => n,
        (None, Some(tau)) => {
            let params = BathParameters::new(a.temperature, tau)?.with_t_max(tau)?;
            let reference = bcf_quadrature(&model, &params)?;
            let search = chain_length_for_horizon(&measure, &reference, tau, a.tol)?;
            summary.distance = Some(search.distance);
            summary.trace = search.trace;
            search.length
        }
        (None, None) => return Err(CliError::Usage("give --length or --horizon".into())),
    };
    summary.length = length;
    let coeffs = lanczos_coefficients(&measure, length)?;
    let mut star = chain_to_star(&coeffs)?;
    star.temperature = a.temperature;
    star.horizon = a.horizon;
    let meta = || Metadata::new().with("model", &input.name).with("support_cm1", format!("{},{}", a.support.0, a.support.1));
    run.write("chain.csv", &coeffs.to_csv(meta()))?;
    run.write("star.csv", &star.to_csv(meta()))?;
    let n = (a.t_max / a.dt).round() as usize + 1;
    let mut c = discrete_bcf(&star, a.dt, n);
    c.temperature = a.temperature;
    write_correlation(&mut run, "correlation.csv", &c, meta())?;
    run.write_json("chain.json", &summary)?;
    match summary.distance {
        Some(d) => println!("chain length {length} (distance {d:.4} at tolerance {})", a.tol),
        None => println!("chain length {length}"),
    }
    run.finish()?;
    Ok(())
}

fn absorb(a: AbsorbArgs) -> CliResult<()> {
    let loaded = Scenario::load(Input::read(&a.scenario)?)?;
    let mut run = Run::new(&a.out.out, a.out.plot)?;
    for i in &loaded.inputs {
        run.input(i);
    }
    let mut disorder = loaded.disorder(a.seed)?;
    if let Some(n) = a.samples {
        disorder.n_samples = n;
    }
    if disorder.sigma > 0.0 {
        run.seed(a.seed);
    }
    let sc = &loaded.scenario;
    let label = sc.label.clone().unwrap_or_else(|| loaded.system.label.clone());
    let meta = || {
        let m = Metadata::new()
            .with("scenario", &a.scenario)
            .with("temperature_K", sc.temperature)
            .with("disorder_sigma_cm1", disorder.sigma)
            .with("engine", sc.engine.as_deref().unwrap_or("complex"));
        match &sc.note {
            Some(n) => m.with("note", n),
            None => m,
        }
    };
    let opts = EnsembleOptions { gap_step: None, interpolate: sc.interpolate.unwrap_or(true) };
    if let Some(couplings) = &sc.couplings_cm1 {
        let cfg = loaded.config()?;
        let spectra =
            dimer_scan(&loaded.system, couplings, &cfg, &disorder, &loaded.time, sc.window_fs, &loaded.spectrum, &opts)?;
        for (v, s) in couplings.iter().zip(&spectra) {
            write_absorption(&mut run, &format!("absorption_V{v}.csv"), s, meta().with("coupling_cm1", v))?;
            println!("V = {v} cm-1: maximum at {:.1} cm-1", s.argmax());
        }
    } else {
        let mut d = match loaded.method {
            Method::Cumulant => {
                let env = loaded.site_environment();
                let eps = loaded.system.site_energies[0];
                let mut d = cumulant_correlation(&env, sc.temperature, eps, loaded.system.dipole_strength(), &loaded.time)?;
                // Gaussian disorder of a single site multiplies by its characteristic function.
                let s = angular(disorder.sigma);
                for (j, v) in d.values.iter_mut().enumerate() {
                    let x = s * j as f64 * d.dt;
                    *v *= (-0.5 * x * x).exp();
                }
                d
            }
            Method::Propagate(_) => disorder_ensemble(&loaded.system, &loaded.config()?, &disorder, &loaded.time, &opts)?,
        };
        if let Some(w) = sc.window_fs {
            d = d.windowed(w)?;
        }
        d.label = label;
        let s = absorption_from_correlation(&d, &loaded.spectrum)?;
        write_dipole(&mut run, "dipole.csv", &d, meta())?;
        write_absorption(&mut run, "absorption.csv", &s, meta())?;
        println!("maximum at {:.1} cm-1", s.argmax());
    }
    run.finish()?;
    Ok(())
}

fn heom_cost(a: HeomCostArgs) -> CliResult<()> {
    let (ns, ms, ls) = (parse_range(&a.sites)?, parse_range(&a.lorentzians)?, parse_range(&a.depth)?);
    let mut run = Run::new(&a.out, false)?;
    println!("{:>4} {:>4} {:>3} {:>24} {:>12}", "N", "M", "L", "operators", "memory");
    let mut rows = Vec::new();
    for &n in &ns {
        for &m in &ms {
            for &l in &ls {
                let mut q = HeomCostQuery::absorption(n, m, l);
                q.block_entries = a.block.unwrap_or(n);
                q.bytes_per_entry = a.bytes_per_entry;
                let (count, bytes) = (heom_count(&q), heom_memory(&q));
                println!("{n:>4} {m:>4} {l:>3} {:>24} {:>12}", grouped(&count), human_bytes(&bytes));
                rows.push(format!("{n},{m},{l},{},{},{count},{bytes}", q.block_entries, q.bytes_per_entry));
            }
        }
    }
    let mut text = String::from("# tool: bathsmith\n# kind: heom-cost\nN,M,L,block_entries,bytes_per_entry,operators,bytes\n");
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    run.write("heom_cost.csv", &text)?;
    run.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct Comparison {
    first: String,
    second: String,
    #[serde(rename = "temperature_K")]
    temperature: f64,
    tau_fs: f64,
    correlation_distance: f64,
    monomer_overlap: f64,
    window_fs: f64,
}

fn compare(a: CompareArgs) -> CliResult<()> {
    let (ia, ib) = (Input::read(&a.first)?, Input::read(&a.second)?);
    let (ma, mb) = (ia.model()?, ib.model()?);
    let mut run = Run::new(&a.out.out, a.out.plot)?;
    run.input(&ia);
    run.input(&ib);
    let params = BathParameters::new(a.temperature, a.tau)?.with_t_max(a.tau)?;
    let d = bcf_distance(&bcf_quadrature(&ma, &params)?, &bcf_quadrature(&mb, &params)?, params.filter_sigma)?;
    let grid = TimeGrid::new(0.5, 6.0 * a.window)?;
    let sg = SpectrumGrid::new(a.energy - a.span, a.energy + a.span, 1.0)?;
    let sa = monomer_absorption(&ma, a.temperature, a.energy, Some(a.window), &grid, &sg)?;
    let sb = monomer_absorption(&mb, a.temperature, a.energy, Some(a.window), &grid, &sg)?;
    let o = spectral_overlap(&sa, &sb)?;
    let meta = || Metadata::new().with("temperature_K", a.temperature).with("window_sigma_fs", a.window);
    write_absorption(&mut run, "monomer_first.csv", &sa, meta().with("model", &ia.name))?;
    write_absorption(&mut run, "monomer_second.csv", &sb, meta().with("model", &ib.name))?;
    let cmp = Comparison {
        first: ia.name.clone(),
        second: ib.name.clone(),
        temperature: a.temperature,
        tau_fs: a.tau,
        correlation_distance: d,
        monomer_overlap: o,
        window_fs: a.window,
    };
    run.write_json("compare.json", &cmp)?;
    println!("{:<28} {:>10} {:>10}  verdict", "metric", "value", "threshold");
    let verdict = |ok: bool| if ok { "equivalent" } else { "different" };
    println!("{:<28} {:>10.4} {:>10}  {}", format!("correlation distance ({} fs)", a.tau), d, "< 0.05", verdict(d < 0.05));
    println!("{:<28} {:>10.4} {:>10}  {}", "monomer spectral overlap", o, ">= 0.99", verdict(o >= 0.99));
    run.finish()?;
    Ok(())
}

fn peaks(a: PeaksArgs) -> CliResult<()> {
    let input = Input::read(&a.model)?;
    let model = input.model()?;
    let mut run = Run::new(&a.out, false)?;
    run.input(&input);
    let spec = filtered_spectrum(&model, &BathParameters::new(a.temperature, a.tau)?)?;
    let mut census = count_peaks(&spec, a.prominence)?;
    census.peaks = census.above(a.above);
    println!("{} peaks", census.count());
    for p in &census.peaks {
        println!("{:>10.1} cm-1  height {:.4e}  prominence {:.4e}", p.center, p.height, p.prominence);
    }
    run.write_json("peaks.json", &census)?;
    run.finish()?;
    Ok(())
}
