//! Dormand–Prince 8(5,3) with the seventh-order continuous extension.
//!
//! Tableau values are the published DOP853 coefficients (Hairer, Nørsett,
//! Wanner). Dense output costs three extra right-hand-side calls per step and
//! is only computed for steps whose observer asks for it.

use crate::error::{Error, Result};
use std::cell::RefCell;

pub trait System {
    fn dim(&self) -> usize;
    fn rhs(&self, s: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

#[derive(Clone, Copy, Debug)]
pub struct Options {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
    /// Fixed step size; disables error control.
    pub fixed_step: Option<f64>,
}

impl Default for Options {
    fn default() -> Self {
        Options { rtol: 1e-10, atol: 1e-12, h_max: 0.25, h_min: 1e-12, max_steps: 200_000, fixed_step: None }
    }
}

pub enum Control {
    Continue,
    Stop,
    /// Restart from a new state at the current parameter (chart change).
    Replace(Vec<f64>),
}

/// Seventh-order interpolant of one accepted step.
#[derive(Clone, Debug)]
pub struct DenseStep {
    pub s0: f64,
    pub h: f64,
    /// Eight coefficient blocks of `len` entries each.
    pub cont: Vec<f64>,
    pub offset: usize,
    pub len: usize,
}

impl DenseStep {
    pub fn s1(&self) -> f64 {
        self.s0 + self.h
    }

    pub fn eval_into(&self, s: f64, out: &mut [f64]) {
        let th = (s - self.s0) / self.h;
        let th1 = 1.0 - th;
        let n = self.len;
        let c = &self.cont;
        for i in 0..n {
            let conpar = c[4 * n + i] + (c[5 * n + i] + (c[6 * n + i] + c[7 * n + i] * th) * th1) * th;
            out[i] = c[i] + (c[n + i] + (c[2 * n + i] + (c[3 * n + i] + conpar * th1) * th) * th1) * th;
        }
    }

    pub fn eval(&self, s: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        self.eval_into(s, &mut out);
        out
    }

    /// Restrict to components `offset..offset+len` of the stored block.
    pub fn restrict(&self, offset: usize, len: usize) -> DenseStep {
        let mut cont = Vec::with_capacity(8 * len);
        for b in 0..8 {
            cont.extend_from_slice(&self.cont[b * self.len + offset..b * self.len + offset + len]);
        }
        DenseStep { s0: self.s0, h: self.h, cont, offset: self.offset + offset, len }
    }
}

/// View of an accepted step handed to the observer.
pub struct StepView<'a, S: System> {
    pub s0: f64,
    pub s1: f64,
    pub y0: &'a [f64],
    pub y1: &'a [f64],
    sys: &'a S,
    stages: &'a Stages,
    dense: RefCell<Option<DenseStep>>,
}

impl<'a, S: System> StepView<'a, S> {
    /// Dense interpolant over the full state.
    pub fn dense(&self) -> Result<DenseStep> {
        if let Some(d) = self.dense.borrow().as_ref() {
            return Ok(d.clone());
        }
        let d = self.stages.dense(self.sys, self.s0, self.s1 - self.s0, self.y0, self.y1)?;
        *self.dense.borrow_mut() = Some(d.clone());
        Ok(d)
    }

    pub fn eval(&self, s: f64) -> Result<Vec<f64>> {
        if s == self.s1 {
            return Ok(self.y1.to_vec());
        }
        if s == self.s0 {
            return Ok(self.y0.to_vec());
        }
        if self.dense.borrow().is_none() {
            self.dense()?;
        }
        Ok(self.dense.borrow().as_ref().unwrap().eval(s))
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub s: f64,
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub evals: usize,
    pub stopped: bool,
}

struct Stages {
    k: Vec<Vec<f64>>, // k[0] = f(y0); k[1..=11] stages 2..12; k[12] = f(y1)
}

impl Stages {
    fn new(n: usize) -> Self {
        Stages { k: vec![vec![0.0; n]; 13] }
    }

    fn dense<S: System>(&self, sys: &S, s0: f64, h: f64, y0: &[f64], y1: &[f64]) -> Result<DenseStep> {
        let n = y0.len();
        let k = &self.k;
        let (k1, k6, k7, k8, k9, k10, k11, k12, knew) = (&k[0], &k[5], &k[6], &k[7], &k[8], &k[9], &k[10], &k[11], &k[12]);
        let mut cont = vec![0.0; 8 * n];
        for i in 0..n {
            let ydiff = y1[i] - y0[i];
            let bspl = h * k1[i] - ydiff;
            cont[i] = y0[i];
            cont[n + i] = ydiff;
            cont[2 * n + i] = bspl;
            cont[3 * n + i] = ydiff - h * knew[i] - bspl;
            cont[4 * n + i] = D41 * k1[i] + D46 * k6[i] + D47 * k7[i] + D48 * k8[i] + D49 * k9[i] + D410 * k10[i]
                + D411 * k11[i]
                + D412 * k12[i];
            cont[5 * n + i] = D51 * k1[i] + D56 * k6[i] + D57 * k7[i] + D58 * k8[i] + D59 * k9[i] + D510 * k10[i]
                + D511 * k11[i]
                + D512 * k12[i];
            cont[6 * n + i] = D61 * k1[i] + D66 * k6[i] + D67 * k7[i] + D68 * k8[i] + D69 * k9[i] + D610 * k10[i]
                + D611 * k11[i]
                + D612 * k12[i];
            cont[7 * n + i] = D71 * k1[i] + D76 * k6[i] + D77 * k7[i] + D78 * k8[i] + D79 * k9[i] + D710 * k10[i]
                + D711 * k11[i]
                + D712 * k12[i];
        }
        let mut y = vec![0.0; n];
        let mut k14 = vec![0.0; n];
        let mut k15 = vec![0.0; n];
        let mut k16 = vec![0.0; n];
        for i in 0..n {
            y[i] = y0[i]
                + h * (A141 * k1[i] + A147 * k7[i] + A148 * k8[i] + A149 * k9[i] + A1410 * k10[i] + A1411 * k11[i]
                    + A1412 * k12[i]
                    + A1413 * knew[i]);
        }
        sys.rhs(s0 + C14 * h, &y, &mut k14)?;
        for i in 0..n {
            y[i] = y0[i]
                + h * (A151 * k1[i] + A156 * k6[i] + A157 * k7[i] + A158 * k8[i] + A1511 * k11[i] + A1512 * k12[i]
                    + A1513 * knew[i]
                    + A1514 * k14[i]);
        }
        sys.rhs(s0 + C15 * h, &y, &mut k15)?;
        for i in 0..n {
            y[i] = y0[i]
                + h * (A161 * k1[i] + A166 * k6[i] + A167 * k7[i] + A168 * k8[i] + A169 * k9[i] + A1613 * knew[i]
                    + A1614 * k14[i]
                    + A1615 * k15[i]);
        }
        sys.rhs(s0 + C16 * h, &y, &mut k16)?;
        for i in 0..n {
            cont[4 * n + i] = h * (cont[4 * n + i] + D413 * knew[i] + D414 * k14[i] + D415 * k15[i] + D416 * k16[i]);
            cont[5 * n + i] = h * (cont[5 * n + i] + D513 * knew[i] + D514 * k14[i] + D515 * k15[i] + D516 * k16[i]);
            cont[6 * n + i] = h * (cont[6 * n + i] + D613 * knew[i] + D614 * k14[i] + D615 * k15[i] + D616 * k16[i]);
            cont[7 * n + i] = h * (cont[7 * n + i] + D713 * knew[i] + D714 * k14[i] + D715 * k15[i] + D716 * k16[i]);
        }
        Ok(DenseStep { s0, h, cont, offset: 0, len: n })
    }
}

const A: [&[(usize, f64)]; 11] = [
    &[(0, A21)],
    &[(0, A31), (1, A32)],
    &[(0, A41), (2, A43)],
    &[(0, A51), (2, A53), (3, A54)],
    &[(0, A61), (3, A64), (4, A65)],
    &[(0, A71), (3, A74), (4, A75), (5, A76)],
    &[(0, A81), (3, A84), (4, A85), (5, A86), (6, A87)],
    &[(0, A91), (3, A94), (4, A95), (5, A96), (6, A97), (7, A98)],
    &[(0, A101), (3, A104), (4, A105), (5, A106), (6, A107), (7, A108), (8, A109)],
    &[(0, A111), (3, A114), (4, A115), (5, A116), (6, A117), (7, A118), (8, A119), (9, A1110)],
    &[(0, A121), (3, A124), (4, A125), (5, A126), (6, A127), (7, A128), (8, A129), (9, A1210), (10, A1211)],
];
const C: [f64; 11] = [C2, C3, C4, C5, C6, C7, C8, C9, C10, C11, 1.0];
const B: [(usize, f64); 8] = [(0, B1), (5, B6), (6, B7), (7, B8), (8, B9), (9, B10), (10, B11), (11, B12)];
const ER: [(usize, f64); 8] =
    [(0, ER1), (5, ER6), (6, ER7), (7, ER8), (8, ER9), (9, ER10), (10, ER11), (11, ER12)];

const SAFE: f64 = 0.9;
const FACC1: f64 = 1.0 / 0.333;
const FACC2: f64 = 1.0 / 6.0;
const EXPO1: f64 = 1.0 / 8.0;

fn initial_step<S: System>(sys: &S, s0: f64, y0: &[f64], f0: &[f64], opts: &Options) -> Result<f64> {
    let n = y0.len();
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..n {
        let sk = opts.atol + opts.rtol * y0[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (y0[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
    h = h.min(opts.h_max);
    let y1: Vec<f64> = (0..n).map(|i| y0[i] + h * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(s0 + h, &y1, &mut f1)?;
    let mut der2 = 0.0;
    for i in 0..n {
        let sk = opts.atol + opts.rtol * y0[i].abs();
        der2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(1.0 / 8.0) };
    Ok((100.0 * h).min(h1).min(opts.h_max))
}

/// Integrates from `s0` to `s_end` (> s0), calling `observer` after each
/// accepted step.
/// Step size below which a stage outside the domain is reported as an exit.
pub const EXIT_RESOLUTION: f64 = 1e-9;

pub fn solve<S, O>(sys: &S, s0: f64, y0: &[f64], s_end: f64, opts: &Options, mut observer: O) -> Result<Outcome>
where
    S: System,
    O: FnMut(&StepView<S>) -> Result<Control>,
{
    let n = sys.dim();
    assert_eq!(y0.len(), n);
    let mut st = Stages::new(n);
    let mut y = y0.to_vec();
    let mut s = s0;
    sys.rhs(s, &y, &mut st.k[0])?;
    let mut evals = 1;
    let mut h = match opts.fixed_step {
        Some(h) => h,
        None => {
            evals += 1;
            initial_step(sys, s, &y, &st.k[0], opts)?
        }
    };
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut accepted = 0;
    let mut rejected = 0;
    let mut last_rejected = false;
    while s < s_end {
        if accepted + rejected >= opts.max_steps {
            return Err(Error::StepUnderflow { s });
        }
        let mut last = false;
        if s + h >= s_end || (s_end - s - h) < 1e-12 * s_end.abs().max(1.0) {
            h = s_end - s;
            last = true;
        }
        if opts.fixed_step.is_none() && h < opts.h_min {
            return Err(Error::StepUnderflow { s });
        }
        let mut stage_err = None;
        for (j, row) in A.iter().enumerate() {
            for i in 0..n {
                let mut acc = 0.0;
                for &(m, a) in row.iter() {
                    acc += a * st.k[m][i];
                }
                ytmp[i] = y[i] + h * acc;
            }
            if let Err(e) = sys.rhs(s + C[j] * h, &ytmp, &mut st.k[j + 1]) {
                stage_err = Some(e);
                break;
            }
        }
        if let Some(e) = stage_err {
            // A trial stage left the domain: shrink towards the boundary.
            if opts.fixed_step.is_some() || h < EXIT_RESOLUTION {
                return Err(e);
            }
            rejected += 1;
            h *= 0.25;
            last_rejected = true;
            continue;
        }
        evals += 11;
        let mut err = 0.0;
        let mut err2 = 0.0;
        for i in 0..n {
            let mut incr = 0.0;
            for &(m, b) in B.iter() {
                incr += b * st.k[m][i];
            }
            ynew[i] = y[i] + h * incr;
            let sk = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            let e2 = incr - BHH1 * st.k[0][i] - BHH2 * st.k[8][i] - BHH3 * st.k[11][i];
            err2 += (e2 / sk).powi(2);
            let mut e = 0.0;
            for &(m, c) in ER.iter() {
                e += c * st.k[m][i];
            }
            err += (e / sk).powi(2);
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err * (1.0 / (deno * n as f64)).sqrt();
        let accept = opts.fixed_step.is_some() || err <= 1.0;
        if !err.is_finite() && opts.fixed_step.is_none() {
            rejected += 1;
            h *= 0.1;
            last_rejected = true;
            continue;
        }
        if accept {
            accepted += 1;
            let s_new = if last { s_end } else { s + h };
            sys.rhs(s_new, &ynew, &mut st.k[12])?;
            evals += 1;
            let control = {
                let view = StepView { s0: s, s1: s_new, y0: &y, y1: &ynew, sys, stages: &st, dense: RefCell::new(None) };
                let c = observer(&view)?;
                if view.dense.borrow().is_some() {
                    evals += 3;
                }
                c
            };
            s = s_new;
            match control {
                Control::Continue => {
                    y.copy_from_slice(&ynew);
                    let knew = st.k[12].clone();
                    st.k[0].copy_from_slice(&knew);
                }
                Control::Stop => {
                    y.copy_from_slice(&ynew);
                    return Ok(Outcome { s, y, accepted, rejected, evals, stopped: true });
                }
                Control::Replace(y2) => {
                    y.copy_from_slice(&y2);
                    sys.rhs(s, &y, &mut st.k[0])?;
                    evals += 1;
                }
            }
            if let Some(fh) = opts.fixed_step {
                h = fh;
            } else {
                let fac11 = err.powf(EXPO1);
                let fac = FACC2.max(FACC1.min(fac11 / SAFE));
                let mut h_new = h / fac;
                if last_rejected {
                    h_new = h_new.min(h);
                }
                last_rejected = false;
                h = h_new.min(opts.h_max);
            }
        } else {
            let fac11 = err.powf(EXPO1);
            h /= FACC1.min(fac11 / SAFE);
            rejected += 1;
            last_rejected = true;
        }
    }
    Ok(Outcome { s, y, accepted, rejected, evals, stopped: false })
}

const A21: f64 = 5.26001519587677318785587544488E-2;
const A31: f64 = 1.97250569845378994544595329183E-2;
const A32: f64 = 5.91751709536136983633785987549E-2;
const A41: f64 = 2.95875854768068491816892993775E-2;
const A43: f64 = 8.87627564304205475450678981324E-2;
const A51: f64 = 2.41365134159266685502369798665E-1;
const A53: f64 = -8.84549479328286085344864962717E-1;
const A54: f64 = 9.24834003261792003115737966543E-1;
const A61: f64 = 3.7037037037037037037037037037E-2;
const A64: f64 = 1.70828608729473871279604482173E-1;
const A65: f64 = 1.25467687566822425016691814123E-1;
const A71: f64 = 3.7109375E-2;
const A74: f64 = 1.70252211019544039314978060272E-1;
const A75: f64 = 6.02165389804559606850219397283E-2;
const A76: f64 = -1.7578125E-2;
const A81: f64 = 3.70920001185047927108779319836E-2;
const A84: f64 = 1.70383925712239993810214054705E-1;
const A85: f64 = 1.07262030446373284651809199168E-1;
const A86: f64 = -1.53194377486244017527936158236E-2;
const A87: f64 = 8.27378916381402288758473766002E-3;
const A91: f64 = 6.24110958716075717114429577812E-1;
const A94: f64 = -3.36089262944694129406857109825E0;
const A95: f64 = -8.68219346841726006818189891453E-1;
const A96: f64 = 2.75920996994467083049415600797E1;
const A97: f64 = 2.01540675504778934086186788979E1;
const A98: f64 = -4.34898841810699588477366255144E1;
const A101: f64 = 4.77662536438264365890433908527E-1;
const A104: f64 = -2.48811461997166764192642586468E0;
const A105: f64 = -5.90290826836842996371446475743E-1;
const A106: f64 = 2.12300514481811942347288949897E1;
const A107: f64 = 1.52792336328824235832596922938E1;
const A108: f64 = -3.32882109689848629194453265587E1;
const A109: f64 = -2.03312017085086261358222928593E-2;
const A111: f64 = -9.3714243008598732571704021658E-1;
const A114: f64 = 5.18637242884406370830023853209E0;
const A115: f64 = 1.09143734899672957818500254654E0;
const A116: f64 = -8.14978701074692612513997267357E0;
const A117: f64 = -1.85200656599969598641566180701E1;
const A118: f64 = 2.27394870993505042818970056734E1;
const A119: f64 = 2.49360555267965238987089396762E0;
const A1110: f64 = -3.0467644718982195003823669022E0;
const A121: f64 = 2.27331014751653820792359768449E0;
const A124: f64 = -1.05344954667372501984066689879E1;
const A125: f64 = -2.00087205822486249909675718444E0;
const A126: f64 = -1.79589318631187989172765950534E1;
const A127: f64 = 2.79488845294199600508499808837E1;
const A128: f64 = -2.85899827713502369474065508674E0;
const A129: f64 = -8.87285693353062954433549289258E0;
const A1210: f64 = 1.23605671757943030647266201528E1;
const A1211: f64 = 6.43392746015763530355970484046E-1;

const A141: f64 = 5.61675022830479523392909219681E-2;
const A147: f64 = 2.53500210216624811088794765333E-1;
const A148: f64 = -2.46239037470802489917441475441E-1;
const A149: f64 = -1.24191423263816360469010140626E-1;
const A1410: f64 = 1.5329179827876569731206322685E-1;
const A1411: f64 = 8.20105229563468988491666602057E-3;
const A1412: f64 = 7.56789766054569976138603589584E-3;
const A1413: f64 = -8.298E-3;
const A151: f64 = 3.18346481635021405060768473261E-2;
const A156: f64 = 2.83009096723667755288322961402E-2;
const A157: f64 = 5.35419883074385676223797384372E-2;
const A158: f64 = -5.49237485713909884646569340306E-2;
const A1511: f64 = -1.08347328697249322858509316994E-4;
const A1512: f64 = 3.82571090835658412954920192323E-4;
const A1513: f64 = -3.40465008687404560802977114492E-4;
const A1514: f64 = 1.41312443674632500278074618366E-1;
const A161: f64 = -4.28896301583791923408573538692E-1;
const A166: f64 = -4.69762141536116384314449447206E0;
const A167: f64 = 7.68342119606259904184240953878E0;
const A168: f64 = 4.06898981839711007970213554331E0;
const A169: f64 = 3.56727187455281109270669543021E-1;
const A1613: f64 = -1.39902416515901462129418009734E-3;
const A1614: f64 = 2.9475147891527723389556272149E0;
const A1615: f64 = -9.15095847217987001081870187138E0;

const B1: f64 = 5.42937341165687622380535766363E-2;
const B6: f64 = 4.45031289275240888144113950566E0;
const B7: f64 = 1.89151789931450038304281599044E0;
const B8: f64 = -5.8012039600105847814672114227E0;
const B9: f64 = 3.1116436695781989440891606237E-1;
const B10: f64 = -1.52160949662516078556178806805E-1;
const B11: f64 = 2.01365400804030348374776537501E-1;
const B12: f64 = 4.47106157277725905176885569043E-2;

const BHH1: f64 = 0.244094488188976377952755905512E+00;
const BHH2: f64 = 0.733846688281611857341361741547E+00;
const BHH3: f64 = 0.220588235294117647058823529412E-01;

const C2: f64 = 0.526001519587677318785587544488E-01;
const C3: f64 = 0.789002279381515978178381316732E-01;
const C4: f64 = 0.118350341907227396726757197510E+00;
const C5: f64 = 0.281649658092772603273242802490E+00;
const C6: f64 = 0.333333333333333333333333333333E+00;
const C7: f64 = 0.25E+00;
const C8: f64 = 0.307692307692307692307692307692E+00;
const C9: f64 = 0.651282051282051282051282051282E+00;
const C10: f64 = 0.6E+00;
const C11: f64 = 0.857142857142857142857142857142E+00;
const C14: f64 = 0.1E+00;
const C15: f64 = 0.2E+00;
const C16: f64 = 0.777777777777777777777777777778E+00;

const ER1: f64 = 0.1312004499419488073250102996E-01;
const ER6: f64 = -0.1225156446376204440720569753E+01;
const ER7: f64 = -0.4957589496572501915214079952E+00;
const ER8: f64 = 0.1664377182454986536961530415E+01;
const ER9: f64 = -0.3503288487499736816886487290E+00;
const ER10: f64 = 0.3341791187130174790297318841E+00;
const ER11: f64 = 0.8192320648511571246570742613E-01;
const ER12: f64 = -0.2235530786388629525884427845E-01;

const D41: f64 = -0.84289382761090128651353491142E+01;
const D46: f64 = 0.56671495351937776962531783590E+00;
const D47: f64 = -0.30689499459498916912797304727E+01;
const D48: f64 = 0.23846676565120698287728149680E+01;
const D49: f64 = 0.21170345824450282767155149946E+01;
const D410: f64 = -0.87139158377797299206789907490E+00;
const D411: f64 = 0.22404374302607882758541771650E+01;
const D412: f64 = 0.63157877876946881815570249290E+00;
const D413: f64 = -0.88990336451333310820698117400E-01;
const D414: f64 = 0.18148505520854727256656404962E+02;
const D415: f64 = -0.91946323924783554000451984436E+01;
const D416: f64 = -0.44360363875948939664310572000E+01;
const D51: f64 = 0.10427508642579134603413151009E+02;
const D56: f64 = 0.24228349177525818288430175319E+03;
const D57: f64 = 0.16520045171727028198505394887E+03;
const D58: f64 = -0.37454675472269020279518312152E+03;
const D59: f64 = -0.22113666853125306036270938578E+02;
const D510: f64 = 0.77334326684722638389603898808E+01;
const D511: f64 = -0.30674084731089398182061213626E+02;
const D512: f64 = -0.93321305264302278729567221706E+01;
const D513: f64 = 0.15697238121770843886131091075E+02;
const D514: f64 = -0.31139403219565177677282850411E+02;
const D515: f64 = -0.93529243588444783865713862664E+01;
const D516: f64 = 0.35816841486394083752465898540E+02;
const D61: f64 = 0.19985053242002433820987653617E+02;
const D66: f64 = -0.38703730874935176555105901742E+03;
const D67: f64 = -0.18917813819516756882830838328E+03;
const D68: f64 = 0.52780815920542364900561016686E+03;
const D69: f64 = -0.11573902539959630126141871134E+02;
const D610: f64 = 0.68812326946963000169666922661E+01;
const D611: f64 = -0.10006050966910838403183860980E+01;
const D612: f64 = 0.77771377980534432092869265740E+00;
const D613: f64 = -0.27782057523535084065932004339E+01;
const D614: f64 = -0.60196695231264120758267380846E+02;
const D615: f64 = 0.84320405506677161018159903784E+02;
const D616: f64 = 0.11992291136182789328035130030E+02;
const D71: f64 = -0.25693933462703749003312586129E+02;
const D76: f64 = -0.15418974869023643374053993627E+03;
const D77: f64 = -0.23152937917604549567536039109E+03;
const D78: f64 = 0.35763911791061412378285349910E+03;
const D79: f64 = 0.93405324183624310003907691704E+02;
const D710: f64 = -0.37458323136451633156875139351E+02;
const D711: f64 = 0.10409964950896230045147246184E+03;
const D712: f64 = 0.29840293426660503123344363579E+02;
const D713: f64 = -0.43533456590011143754432175058E+02;
const D714: f64 = 0.96324553959188282948394950600E+02;
const D715: f64 = -0.39177261675615439165231486172E+02;
const D716: f64 = -0.14972683625798562581422125276E+03;

/// Root of `f` in [a, b] given a sign change, by the Illinois variant of
/// regula falsi with a bisection fallback.
pub fn bracket_root<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, tol: f64) -> f64 {
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut side = 0;
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if fc == 0.0 {
            return c;
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    if fa.abs() < fb.abs() {
        a
    } else {
        b
    }
}
