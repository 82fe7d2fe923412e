//! Published reference orbits used by the integration and acceptance tests.
#![allow(dead_code, clippy::excessive_precision)]

use sdsp::seeds::{Regime, SeedSpec};

#[derive(Debug, Clone, Copy)]
pub struct RefRow {
    pub k: u32,
    pub j: u32,
    pub case: &'static str,
    pub x: [f64; 3],
    pub t_quarter: f64,
    /// Stability index, when tabulated.
    pub rho: Option<f64>,
}

impl RefRow {
    pub fn spec(&self, regime: Regime, mu: f64, cos2i: f64) -> SeedSpec {
        SeedSpec {
            regime,
            k: self.k,
            j: self.j,
            case: self.case.parse().unwrap(),
            mu,
            cos2i,
        }
    }
}

const fn row(k: u32, j: u32, case: &'static str, x: [f64; 3], t_quarter: f64, rho: Option<f64>) -> RefRow {
    RefRow { k, j, case, x, t_quarter, rho }
}

pub const COMET_MU: f64 = 0.5;
pub const COMET_COS2I: f64 = 1.0 / 3.0;

/// Comet-type orbits, mu = 0.5, k = 1 and 2.
pub const COMET_ROWS: [RefRow; 7] = [
    row(1, 0, "1+--", [2.1188907053948314, -2.4745187952972980, -0.59854164753778971], 4.7457525451537164, None),
    row(1, 0, "1+-+", [0.23862606510911777, -1.1215624162229199, -0.28539427470548040], 1.4642141631345391, None),
    row(2, 0, "1+++", [3.6836976532989136, -3.3058283884238149, 0.36090164760291182], 10.979823749195759, None),
    row(2, 0, "1+--", [2.9521280076112233, -3.2950401216394209, -0.47588726499054074], 7.8737465982322021, None),
    row(2, 0, "1+-+", [2.1350003684163883, -1.6290350406991201, -0.45256379929931584], 13.990486164660886, None),
    row(2, 0, "1++-", [2.9509027501751386, -3.2849171529780969, 0.48219253123559525], 7.8732466675287895, None),
    row(2, 0, "1-+-", [0.76592552564005434, -2.4408679202287282, -3.90e-16], 3.1691491002387817, None),
];

/// Tabulated multiplier moduli for `COMET_ROWS`; three per orbit, the
/// other three being reciprocals.
pub const COMET_MODULI: [[f64; 3]; 7] = [
    [1.102364, 1.011916, 1.000000],
    [1.0, 1.016881, 1.000000],
    [1.0, 1.000007, 1.000610],
    [1.0, 1.000002, 1.000610],
    [1.746796, 1.000001, 1.353232],
    [1.0, 1.000001, 1.000667],
    [1.000117, 1.0, 57016.27],
];

/// Sun-Jupiter Hill-type orbits in the m2-centred frame.
pub const SJ_M1: f64 = 0.00095388;
pub const SJ_COS2I: f64 = 0.5;
pub const SJ_ROWS: [RefRow; 13] = [
    row(0, 1, "1+++", [0.34184419200192950, 0.57007838000595457, 1.4462000467551235], 1.5706863145480114, Some(6.00057)),
    row(0, 1, "1+--", [0.48068891829543647, -1.4998370691818192, -1.0198406921902150], 1.5710001462672483, Some(6.00329)),
    row(0, 1, "1+-+", [0.48068899192513403, -1.5009002236403080, 1.0187770988239691], 1.5710006641396190, Some(6.00328)),
    row(0, 1, "1--+", [-0.20851692493061830, -2.7837590331097442, -3.2e-19], 6.2822221595431698, Some(6.59924)),
    row(0, 2, "1+--", [0.34192369320122085, -1.5508057561554771, -1.2085490060598960], 1.5709567465854295, Some(6.00008)),
    row(0, 2, "1-++", [-0.34189556538145993, 1.5412261758084023, 1.2181591034147481], 1.5709581527177769, Some(6.00000)),
    row(0, 2, "1+-+", [0.34192369381559801, -1.5506518035876165, 1.2087029678246444], 1.5709567175162318, Some(6.00008)),
    row(0, 2, "1++-", [0.48036437204322080, 0.58745648907752490, -0.97014033755774143], 4.7118144439134388, Some(6.12459)),
    row(0, 2, "1-+-", [-0.34187962005576622, 0.94062898595117284, -1.6012449725489522], 1.5708690424098430, Some(6.00000)),
    row(0, 3, "1+++", [0.23103375232088796, 1.2532539777939462, 1.4564805002024286], 1.5707061065760803, Some(6.00000)),
    row(0, 3, "1+--", [0.27320731430162748, -1.6256446985588056, -1.3519368577710080], 1.5709114612538715, Some(6.00000)),
    row(0, 3, "1++-", [0.23103364333916993, 1.4004683532340454, -1.2894297512200859], 1.5706952744331948, Some(6.00000)),
    row(0, 3, "1-+-", [-0.27319062603190147, 1.3338747568633496, -1.5912567702349809], 1.5708826068536563, Some(6.00000)),
];

/// Hill's lunar problem, j = 4, 5, 10.
pub const LUNAR_COS2I: f64 = 0.5;
pub const LUNAR_ROWS: [RefRow; 9] = [
    row(0, 4, "1+++", [0.19458458234778178, 1.5950280529591743, 1.4247117508651472], 1.4965614757267209, Some(6.0)),
    row(0, 4, "1++-", [0.19479555207814894, 1.5333467594669177, -1.4967190735481686], 1.4985745486163704, Some(6.0)),
    row(0, 5, "1+-+", [0.20883475231870061, -1.7966587251692738, 1.5312112883077162], 1.6542335677818685, Some(6.0)),
    row(0, 5, "2+--", [0.14149505268610094, -0.15282899985441442, -2.3449761662964281], 1.6535652804050742, Some(6.0)),
    row(0, 10, "1+++", [0.12159837938035424, 2.0270650757700204, 1.9076768240912407], 1.5343386249413951, Some(6.0)),
    row(0, 10, "1+--", [0.13360367656266917, -2.0954815284812112, -1.9154997962270426], 1.6126854371306503, Some(6.0)),
    row(0, 10, "1++-", [0.12159167039529933, 2.0348664875498046, -1.8989819872184843], 1.5342210264366785, Some(6.0)),
    row(0, 10, "1--+", [-0.12150492233283411, -2.1359757477986805, 1.7793716039307683], 1.5327029511595240, Some(6.0)),
    row(0, 10, "1-+-", [-0.13345847029345070, 1.9810562541769794, -2.0279836849711224], 1.6099183076072057, Some(6.0)),
];

/// Planar orbit started on the y axis, mu = 0.5.
pub const YAXIS_SEED: [f64; 3] = [4.0, 0.0, 4.5];
pub const YAXIS_T0: f64 = 5.585;
pub const YAXIS_REF: [f64; 3] = [4.00021433614826, 0.0, 4.50254016243978];
pub const YAXIS_PERIOD: f64 = 5.5815257432169;

/// Multi-revolution Hill-type orbit around m2 = 0.06.
pub const MR_MU: f64 = 0.06;
pub const MR_ROW: RefRow = row(
    0,
    10,
    "1+++",
    [0.12098046779638547, 2.24272842162778e-3, 1.4780876804155e-3],
    1.568164286834137,
    None,
);

/// Large-k comet orbit; only `xi1` and `T/4` are tabulated.
pub const LARGE_K_XI1: f64 = 15.5061254882711;
pub const LARGE_K_TQ: f64 = 95.81968944276656;
