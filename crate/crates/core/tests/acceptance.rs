//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use orbizeta_core::field::cosine;
use orbizeta_core::geometry::affine_fixed_set;
use orbizeta_core::group::rotation2;
use orbizeta_core::oracle::{
    constant_case_zeta, heat_fit_residues, lefschetz_limit, lefschetz_number, numeric_spectrum, projected_residues,
    TwistedZetaContinuation,
};
use orbizeta_core::power::{binomial_oracle, power_family, term_difference};
use orbizeta_core::quadrature::{sphere_monomial_moment, sphere_quadrature};
use orbizeta_core::residues::{Backend, ResidueEngine};
use orbizeta_core::{
    build_named_group, ClassicalSymbol, ContourParams, FiniteGroupAction, Generator, GroupKind, Lattice, LatticeModel,
    RMat, RVec, TrigPoly, C64,
};
use std::f64::consts::PI;
use std::time::{Duration, Instant};

type Check = std::result::Result<String, String>;

fn diag(v: &[f64]) -> RMat {
    RMat::from_diagonal(&RVec::from_column_slice(v))
}

fn circle() -> Lattice {
    Lattice::from_periods(&[2.0 * PI])
}

fn torus() -> Lattice {
    Lattice::from_periods(&[2.0 * PI, 2.0 * PI])
}

fn cyclic(n: usize, gen: Generator, m: usize, l: &Lattice) -> FiniteGroupAction {
    build_named_group(&GroupKind::Cyclic(n), &[gen], m, 1, Some(l), 256).expect("valid group")
}

fn laplace(m: usize, c0: f64, pot: Option<TrigPoly>) -> ClassicalSymbol {
    ClassicalSymbol::from_laplace_type(m, 1, 1.0, c0, &[], pot.map(Into::into)).expect("Laplace type")
}

fn within(name: &str, got: C64, want: C64, tol: f64) -> std::result::Result<String, String> {
    let d = (got - want).norm();
    if d <= tol {
        Ok(format!("{name} {got:.3e} (|Δ| = {d:.1e} ≤ {tol:.0e})"))
    } else {
        Err(format!("{name} {got:.6e}, expected {want:.6e} (|Δ| = {d:.2e} > {tol:.0e})"))
    }
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn budget(elapsed: Duration, limit: f64) -> std::result::Result<String, String> {
    let s = elapsed.as_secs_f64();
    if s < limit {
        Ok(format!("{s:.2}s < {limit}s"))
    } else {
        Err(format!("runtime {s:.2}s exceeds {limit}s"))
    }
}

fn collect(parts: Vec<std::result::Result<String, String>>) -> Check {
    let mut ok = Vec::new();
    for p in parts {
        ok.push(p?);
    }
    Ok(ok.join("; "))
}

/// Residue of the continued zeta at z0 from a symmetric difference of the
/// evaluator, without consulting the pole ledger.
fn numeric_residue(z: &TwistedZetaContinuation, z0: f64) -> std::result::Result<C64, String> {
    let eps = 1e-4;
    let hi = z.eval(z0 + eps).map_err(|e| e.to_string())?;
    let lo = z.eval(z0 - eps).map_err(|e| e.to_string())?;
    Ok((hi - lo) * eps / 2.0)
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for m in [1usize, 2] {
        for c0 in [0.5, 1.0, 3.0] {
            let a = laplace(m, c0, None);
            let fam = power_family(&a, 6).map_err(|e| e.to_string())?;
            for k in 0..=6 {
                let orc = binomial_oracle(&a, k).map_err(|e| e.to_string())?;
                worst = worst.max(term_difference(&fam.components[k], &orc, a.principal));
            }
        }
    }
    let elapsed = start.elapsed();
    collect(vec![
        if worst <= 1e-12 {
            Ok(format!("max coefficient mismatch {worst:.1e} ≤ 1e-12 on ℝ¹ and T², k ≤ 6"))
        } else {
            Err(format!("coefficient mismatch {worst:.2e} > 1e-12"))
        },
        budget(elapsed, 1.0),
    ])
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let g = FiniteGroupAction::trivial(1, 1, Some(&circle()));
    let exact = ResidueEngine::new(g.clone(), laplace(1, 1.0, None), 0, Backend::Exact).map_err(|e| e.to_string())?;
    let contour = ResidueEngine::new(g.clone(), laplace(1, 1.0, None), 0, Backend::Contour(ContourParams::default()))
        .map_err(|e| e.to_string())?;
    let re = exact.residue_orbifold(0).map_err(|e| e.to_string())?;
    let rc = contour.residue_orbifold(0).map_err(|e| e.to_string())?;
    let model = LatticeModel::new(g, 1.0, 1.0, 8).map_err(|e| e.to_string())?;
    let zeta = constant_case_zeta(&model, 0, 4).map_err(|e| e.to_string())?;
    // s = −z
    let oracle = -numeric_residue(&zeta, 0.5)?;
    let elapsed = start.elapsed();
    collect(vec![
        within("exact", re, real(-1.0), 1e-8),
        within("contour", rc, real(-1.0), 1e-3),
        within("oracle vs exact", oracle, re, 1e-6),
        budget(elapsed, 5.0),
    ])
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let mut parts = Vec::new();
    let g = FiniteGroupAction::trivial(1, 1, Some(&circle()));
    for c in [1.0, 2.5] {
        let cases: [(&str, Option<TrigPoly>, f64); 3] = [
            ("V=0", None, 0.0),
            ("V=0.3cos x", Some(cosine(1, 1, 0.3, &[1.0])), 0.0),
            (
                "V=0.3cos x+0.5",
                Some(cosine(1, 1, 0.3, &[1.0]).add(&TrigPoly::scalar(1, 1, real(0.5)))),
                0.5,
            ),
        ];
        for (label, pot, mean) in cases {
            let want = real(-(c + mean) / 2.0);
            let engine = ResidueEngine::new(g.clone(), laplace(1, c, pot.clone()), 2, Backend::Exact)
                .map_err(|e| e.to_string())?;
            let r = engine.residue_orbifold(2).map_err(|e| e.to_string())?;
            parts.push(within(&format!("c={c} {label} engine"), r, want, 1e-8));
            let mut model = LatticeModel::new(g.clone(), 1.0, c, 64).map_err(|e| e.to_string())?;
            if let Some(p) = pot {
                model = model.with_potential(p);
            }
            let sp = numeric_spectrum(&model).map_err(|e| e.to_string())?;
            let (_, res) = heat_fit_residues(&sp, 0, 1, 2).map_err(|e| e.to_string())?;
            let fit = res[2].ok_or("heat fit gave no residue at s=1/2")?;
            parts.push(within(&format!("c={c} {label} heat fit"), fit, r, 2e-2));
        }
    }
    parts.push(budget(start.elapsed(), 30.0));
    collect(parts)
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let g = cyclic(2, Generator::linear(diag(&[1.0, -1.0]), 1), 2, &torus());
    let sigma = 1 - g.identity;
    let engine = ResidueEngine::new(g.clone(), laplace(2, 1.0, None), 1, Backend::Exact).map_err(|e| e.to_string())?;
    let r1 = engine.residue_gamma(sigma, 1).map_err(|e| e.to_string())?;
    let r0 = engine.residue_gamma(sigma, 0).map_err(|e| e.to_string())?;
    let model = LatticeModel::new(g, 1.0, 1.0, 8).map_err(|e| e.to_string())?;
    let zeta = constant_case_zeta(&model, sigma, 4).map_err(|e| e.to_string())?;
    let oracle = -numeric_residue(&zeta, 0.5)?;
    collect(vec![
        within("residue_gamma(σ,1)", r1, real(-1.0), 1e-8),
        within("Epstein oracle", oracle, r1, 1e-6),
        if r0 == C64::new(0.0, 0.0) {
            Ok("residue_gamma(σ,0) = 0 exactly".into())
        } else {
            Err(format!("residue_gamma(σ,0) = {r0} is not exactly zero"))
        },
        budget(start.elapsed(), 10.0),
    ])
}

fn criterion_5() -> Check {
    let mut parts = Vec::new();
    let rot = cyclic(4, Generator::linear(rotation2(PI / 2.0), 1), 2, &torus());
    let shift = Generator::linear(RMat::identity(1, 1), 1).with_trans(RVec::from_vec(vec![PI]));
    let tr = cyclic(2, shift, 1, &circle());
    for (name, g, cutoff) in [("rotation π/2 on T²", rot, 16usize), ("translation π on S¹", tr, 64)] {
        let m = g.m;
        let engine = ResidueEngine::new(g.clone(), laplace(m, 1.0, None), 4, Backend::Exact).map_err(|e| e.to_string())?;
        let model = LatticeModel::new(g.clone(), 1.0, 1.0, cutoff).map_err(|e| e.to_string())?;
        let sp = numeric_spectrum(&model).map_err(|e| e.to_string())?;
        let mut worst: f64 = 0.0;
        let mut singular: f64 = 0.0;
        for gamma in (0..g.order()).filter(|&e| e != g.identity) {
            for k in 0..=4 {
                worst = worst.max(engine.residue_gamma(gamma, k).map_err(|e| e.to_string())?.norm());
            }
            let zeta = constant_case_zeta(&model, gamma, 6).map_err(|e| e.to_string())?;
            if !zeta.poles.is_empty() {
                return Err(format!("{name}: element {gamma} has continuation poles"));
            }
            let (fit, _) = heat_fit_residues(&sp, gamma, m, 4).map_err(|e| e.to_string())?;
            singular = singular.max(fit.singular().iter().map(|c| c.norm()).fold(0.0, f64::max));
        }
        parts.push(if worst <= 1e-10 {
            Ok(format!("{name}: max |residue_gamma| {worst:.1e}"))
        } else {
            Err(format!("{name}: residue_gamma {worst:.2e} > 1e-10"))
        });
        parts.push(if singular < 1e-3 {
            Ok(format!("singular heat coefficients {singular:.1e}"))
        } else {
            Err(format!("{name}: singular heat coefficient {singular:.2e} ≥ 1e-3"))
        });
    }
    collect(parts)
}

fn criterion_6() -> Check {
    let g = cyclic(2, Generator::linear(diag(&[-1.0]), 1), 1, &circle());
    let engine = ResidueEngine::new(g.clone(), laplace(1, 1.0, None), 0, Backend::Exact).map_err(|e| e.to_string())?;
    let model = LatticeModel::new(g.clone(), 1.0, 1.0, 64).map_err(|e| e.to_string())?;
    let sp = numeric_spectrum(&model).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for (i, name) in g.names.iter().enumerate() {
        let r = engine.residue_isotypic(i, 0).map_err(|e| e.to_string())?;
        parts.push(within(&format!("{name} engine"), r, real(-0.5), 1e-8));
        let p = projected_residues(&sp, &g, i, 0).map_err(|e| e.to_string())?[0].ok_or("no projected residue")?;
        parts.push(within(&format!("{name} projected spectrum"), p, r, 2e-2));
    }
    collect(parts)
}

fn dihedral_torus(l: &Lattice, frame: &RMat) -> FiniteGroupAction {
    let gens = [
        Generator::linear(frame * rotation2(PI) * frame.transpose(), 1),
        Generator::linear(frame * diag(&[1.0, -1.0]) * frame.transpose(), 1),
    ];
    build_named_group(&GroupKind::Dihedral(2), &gens, 2, 1, Some(l), 256).expect("valid group")
}

fn criterion_7() -> Check {
    let mut parts = Vec::new();
    // characters and projections
    let mut char_defect: f64 = 0.0;
    let mut proj_defect: f64 = 0.0;
    let groups = [
        cyclic(3, Generator::linear(rotation2(2.0 * PI / 3.0), 1), 2, &Lattice::from_basis(RMat::from_row_slice(2, 2, &[2.0 * PI, -PI, 0.0, PI * 3f64.sqrt()]))),
        build_named_group(
            &GroupKind::Dihedral(4),
            &[Generator::linear(rotation2(PI / 2.0), 1), Generator::linear(diag(&[1.0, -1.0]), 1)],
            2,
            1,
            Some(&torus()),
            256,
        )
        .map_err(|e| e.to_string())?,
        dihedral_torus(&torus(), &RMat::identity(2, 2)),
    ];
    for g in &groups {
        char_defect = char_defect.max(g.character_diagnostics());
        let (idem, orth, comp) = g.projection_defects();
        proj_defect = proj_defect.max(idem).max(orth).max(comp);
    }
    parts.push(if char_defect <= 1e-10 && proj_defect <= 1e-10 {
        Ok(format!("characters {char_defect:.1e}, projections {proj_defect:.1e}"))
    } else {
        Err(format!("character defect {char_defect:.2e}, projection defect {proj_defect:.2e}"))
    });
    // sphere quadrature
    let mut quad: f64 = 0.0;
    for n in 1..=4usize {
        for level in 1..=4usize {
            let rule = sphere_quadrature(n, level).map_err(|e| e.to_string())?;
            let scale = (2.0 * PI).powi(-(n as i32));
            for mu in orbizeta_core::field::multi_indices(n, 2 * level as u32) {
                let got = rule.integrate(|x| mu.iter().zip(x).map(|(&a, &v)| v.powi(a as i32)).product());
                quad = quad.max((got - scale * sphere_monomial_moment(&mu)).abs());
            }
        }
    }
    parts.push(if quad <= 1e-12 {
        Ok(format!("sphere quadrature {quad:.1e}"))
    } else {
        Err(format!("sphere quadrature error {quad:.2e}"))
    });
    // d_weight conjugation invariance on D4
    let d4 = &groups[1];
    let mut dw: f64 = 0.0;
    for gamma in 0..d4.order() {
        let a = affine_fixed_set(d4, gamma).map_err(|e| e.to_string())?;
        for h in 0..d4.order() {
            let b = affine_fixed_set(d4, d4.conjugate(h, gamma)).map_err(|e| e.to_string())?;
            dw = dw.max((a[0].d_weight - b[0].d_weight).abs());
        }
    }
    parts.push(if dw <= 1e-12 {
        Ok(format!("d_weight conjugation {dw:.1e}"))
    } else {
        Err(format!("d_weight conjugation defect {dw:.2e}"))
    });
    // densities on D2/T² with a non-trivial equivariant potential
    let pot = cosine(2, 1, 0.4, &[1.0, 0.0]).add(&cosine(2, 1, 0.2, &[0.0, 2.0])).add(&cosine(2, 1, 0.1, &[1.0, 1.0]));
    let build = |frame: &RMat| -> std::result::Result<ResidueEngine, String> {
        let l = torus().transformed(frame);
        let g = dihedral_torus(&l, frame);
        let base = laplace(2, 0.7, Some(pot.clone()))
            .linear_pullback(frame, &orbizeta_core::CMat::identity(1, 1))
            .map_err(|e| e.to_string())?;
        let sym = base.equivariant_average(&g).map_err(|e| e.to_string())?;
        let mut e = ResidueEngine::new(g, sym, 3, Backend::Exact).map_err(|e| e.to_string())?;
        e.grid = 32;
        Ok(e)
    };
    let engine = build(&RMat::identity(2, 2))?;
    let mut cov: f64 = 0.0;
    for k in 0..=3 {
        let d = engine.densities(k).map_err(|e| e.to_string())?;
        cov = cov.max(engine.covariance_check(&d, 6).map_err(|e| e.to_string())?);
    }
    parts.push(if cov <= 1e-8 {
        Ok(format!("covariance {cov:.1e}"))
    } else {
        Err(format!("covariance defect {cov:.2e}"))
    });
    let rep = engine.report(true).map_err(|e| e.to_string())?;
    let strata = rep.strata_sum_defect();
    let recon = rep.reconstruction_defect(engine.g.identity);
    parts.push(if strata <= 1e-10 {
        Ok(format!("strata sum {strata:.1e}"))
    } else {
        Err(format!("strata-sum defect {strata:.2e}"))
    });
    parts.push(if recon <= 1e-10 {
        Ok(format!("reconstruction {recon:.1e}"))
    } else {
        Err(format!("reconstruction defect {recon:.2e}"))
    });
    let frame = rotation2(0.37);
    let rotated = build(&frame)?.report(false).map_err(|e| e.to_string())?;
    let mut fc: f64 = 0.0;
    for (a, b) in rep.per_k.iter().zip(&rotated.per_k) {
        for (x, y) in a.residue_gamma.iter().zip(&b.residue_gamma) {
            fc = fc.max((x - y).norm());
        }
        for (x, y) in a.residue_isotypic.iter().zip(&b.residue_isotypic) {
            fc = fc.max((x - y).norm());
        }
    }
    parts.push(if fc <= 1e-10 {
        Ok(format!("frame change {fc:.1e}"))
    } else {
        Err(format!("frame-change defect {fc:.2e}"))
    });
    collect(parts)
}

fn criterion_8() -> Check {
    let g = cyclic(2, Generator::linear(diag(&[-1.0]), 1), 1, &circle());
    let sigma = 1 - g.identity;
    let expect = lefschetz_number(&g, sigma).map_err(|e| e.to_string())?;
    let model = LatticeModel::new(g, 1.0, 1.0, 64).map_err(|e| e.to_string())?;
    let sp = numeric_spectrum(&model).map_err(|e| e.to_string())?;
    let lim = lefschetz_limit(&sp, sigma).map_err(|e| e.to_string())?;
    collect(vec![
        within("Σ d_weight·tr T", expect, real(1.0), 1e-12),
        within("heat-trace limit", lim, real(1.0), 1e-3),
    ])
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("binomial oracle equivalence", criterion_1),
        ("circle Δ+1 residue at s=-1/2", criterion_2),
        ("circle residue at s=+1/2", criterion_3),
        ("torus reflection residues", criterion_4),
        ("isolated and free elements", criterion_5),
        ("isotypic split on circle/C2", criterion_6),
        ("structural suites", criterion_7),
        ("Lefschetz limit", criterion_8),
    ];
    let total = Instant::now();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS criterion {} ({name}) [{secs:.2}s]: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {} ({name}) [{secs:.2}s]: {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} of 8 passed in {:.1}s", 8 - failed, total.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
