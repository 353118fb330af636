use super::me::MeNeuralFmu;
use crate::error::Result;

/// Force the bottom chain adds on top of the model, `m·(ẋ_nn[1] − ẋ_me[1])`,
/// at states `(s_rep, v)` for every `v` of the grid. The model derivative is
/// the one the network sees there, `f_me(top(s_rep, v))`. Returns `(v, force)`.
pub fn extract_bottom_response(
    nfmu: &mut MeNeuralFmu,
    params: &[f64],
    v_grid: &[f64],
    s_rep: f64,
    mass: f64,
) -> Result<Vec<(f64, f64)>> {
    if v_grid.is_empty() {
        return Ok(Vec::new());
    }
    nfmu.reset(0.0, &[s_rep, 0.0])?;
    v_grid
        .iter()
        .map(|&v| {
            let dx_me = nfmu.model_derivative(0.0, &[s_rep, v], params)?;
            let dx_nn = nfmu.bottom_output(&dx_me, params)?;
            Ok((v, mass * (dx_nn[1] - dx_me[1])))
        })
        .collect()
}

/// `top(x) − x` per state.
pub fn extract_top_response(nfmu: &mut MeNeuralFmu, params: &[f64], states: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    states
        .iter()
        .map(|x| {
            let y = nfmu.top_output(x, params)?;
            Ok(y.iter().zip(x).map(|(a, b)| a - b).collect())
        })
        .collect()
}
