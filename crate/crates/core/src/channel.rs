//! Air-to-ground channel model for UAV-to-sensor links.
//!
//! Link quality is driven by the elevation angle under which a ground
//! sensor sees the UAV. Line-of-sight probability follows a logistic curve
//! in that angle; path loss mixes LoS/NLoS excess losses with a slant term
//! built from the coverage radius and a fixed carrier/wavelength tail. The
//! scheduler consumes `gain_db` (negated path loss) and compares it against
//! a threshold: a transmission on a link with `gain_db <= gamma_th_db`
//! fails. The boundary itself counts as a failure.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("UAV altitude must be positive and finite, got {altitude_m} m")]
    NonPositiveAltitude { altitude_m: f64 },
    #[error("elevation angle {phi_deg} deg outside [0, 90) domain of the loss model")]
    ElevationOutOfDomain { phi_deg: f64 },
    #[error("channel parameter {name} must be positive, got {value}")]
    NonPositiveParam { name: &'static str, value: f64 },
}

/// Environment and carrier constants of the air-to-ground channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    /// Offset of the logistic LoS curve, degrees. Doubles as the scale
    /// factor on the exponential, so it must stay positive.
    pub a: f64,
    /// Steepness of the logistic LoS curve, 1/degrees.
    pub b: f64,
    /// Excess loss on line-of-sight links, dB.
    pub eta_los_db: f64,
    /// Excess loss on non-line-of-sight links, dB.
    pub eta_nlos_db: f64,
    /// Carrier wavelength, meters.
    pub wavelength_m: f64,
    /// Propagation speed, meters/second.
    pub light_speed_mps: f64,
    /// Radio coverage radius of a UAV, meters. Horizontal leg of the slant
    /// term in the loss formula and the hard limit on service range.
    pub coverage_radius_m: f64,
}

impl Default for ChannelParams {
    /// Dense-urban curve constants with a 2.4 GHz carrier.
    fn default() -> Self {
        Self {
            a: 9.61,
            b: 0.16,
            eta_los_db: 1.0,
            eta_nlos_db: 20.0,
            wavelength_m: 0.125,
            light_speed_mps: 3.0e8,
            coverage_radius_m: 100.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let positive = [
            ("a", self.a),
            ("b", self.b),
            ("wavelength_m", self.wavelength_m),
            ("light_speed_mps", self.light_speed_mps),
            ("coverage_radius_m", self.coverage_radius_m),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ChannelError::NonPositiveParam { name, value });
            }
        }
        Ok(())
    }
}

/// Quality of one UAV-to-sensor link at a given instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkQuality {
    pub elevation_deg: f64,
    pub los_prob: f64,
    pub path_loss_db: f64,
    /// Negated path loss; what the scheduler and the failure test consume.
    pub gain_db: f64,
}

/// Elevation angle in degrees under which a sensor sees the UAV.
///
/// A sensor directly below the UAV sees it at 90 degrees. The altitude must
/// be positive; ground-level or sunken UAVs have no defined elevation.
pub fn elevation_angle_deg(
    altitude_m: f64,
    uav_xy: [f64; 2],
    sensor_xy: [f64; 2],
) -> Result<f64, ChannelError> {
    if !(altitude_m > 0.0) || !altitude_m.is_finite() {
        return Err(ChannelError::NonPositiveAltitude { altitude_m });
    }
    let dx = uav_xy[0] - sensor_xy[0];
    let dy = uav_xy[1] - sensor_xy[1];
    let d = dx.hypot(dy);
    if d == 0.0 {
        return Ok(90.0);
    }
    Ok((altitude_m / d).atan().to_degrees())
}

/// Probability that the link is line-of-sight at elevation `phi_deg`.
///
/// Logistic in the elevation angle: strictly increasing, approaching 1
/// overhead. Meaningful for `phi_deg` in [0, 90].
pub fn los_probability(phi_deg: f64, params: &ChannelParams) -> f64 {
    1.0 / (1.0 + params.a * (-params.b * (phi_deg - params.a)).exp())
}

/// Path loss in dB at elevation `phi_deg`.
///
/// The slant term `coverage_radius * sec(phi)` diverges at 90 degrees, so
/// that angle (and anything outside [0, 90)) is rejected. Callers serving
/// sensors from directly overhead must offset the hover point.
pub fn path_loss_db(phi_deg: f64, params: &ChannelParams) -> Result<f64, ChannelError> {
    if !phi_deg.is_finite() || !(0.0..90.0).contains(&phi_deg) {
        return Err(ChannelError::ElevationOutOfDomain { phi_deg });
    }
    let pr_los = los_probability(phi_deg, params);
    let sec = 1.0 / phi_deg.to_radians().cos();
    Ok(pr_los * (params.eta_los_db - params.eta_nlos_db)
        + 20.0 * (params.coverage_radius_m * sec).log10()
        + 20.0 * params.wavelength_m.log10()
        + 20.0 * (4.0 * PI / params.light_speed_mps).log10()
        + params.eta_nlos_db)
}

/// Full link evaluation for a UAV at `uav_pos` (x, y, altitude) and a
/// sensor on the ground plane.
pub fn link_quality(
    uav_pos: [f64; 3],
    sensor_xy: [f64; 2],
    params: &ChannelParams,
) -> Result<LinkQuality, ChannelError> {
    let elevation_deg = elevation_angle_deg(uav_pos[2], [uav_pos[0], uav_pos[1]], sensor_xy)?;
    let path_loss = path_loss_db(elevation_deg, params)?;
    Ok(LinkQuality {
        elevation_deg,
        los_prob: los_probability(elevation_deg, params),
        path_loss_db: path_loss,
        gain_db: -path_loss,
    })
}

/// Transmission failure test. The boundary counts as a failure: a link
/// sitting exactly at the threshold cannot carry data.
pub fn below_threshold(gain_db: f64, gamma_th_db: f64) -> bool {
    gain_db <= gamma_th_db
}

/// Median gain over the deployment area, used to auto-calibrate the
/// failure threshold when the config does not pin one.
///
/// Evaluates the gain from a UAV hovering at the area center at
/// `altitude_m` toward sensors on a `grid x grid` lattice of cell centers
/// covering the `area_side_m` square. An even `grid` keeps every lattice
/// point off the exact center, away from the overhead singularity.
pub fn calibrate_gamma_th(
    params: &ChannelParams,
    altitude_m: f64,
    area_side_m: f64,
    grid: usize,
) -> Result<f64, ChannelError> {
    if !(area_side_m > 0.0) {
        return Err(ChannelError::NonPositiveParam {
            name: "area_side_m",
            value: area_side_m,
        });
    }
    if grid < 2 || grid % 2 != 0 {
        return Err(ChannelError::NonPositiveParam {
            name: "grid (even, >= 2)",
            value: grid as f64,
        });
    }
    let center = [area_side_m / 2.0, area_side_m / 2.0];
    let mut gains = Vec::with_capacity(grid * grid);
    for ix in 0..grid {
        for iy in 0..grid {
            let x = (ix as f64 + 0.5) / grid as f64 * area_side_m;
            let y = (iy as f64 + 0.5) / grid as f64 * area_side_m;
            let lq = link_quality([center[0], center[1], altitude_m], [x, y], params)?;
            gains.push(lq.gain_db);
        }
    }
    gains.sort_by(|p, q| p.partial_cmp(q).expect("gains are finite"));
    // Even number of samples: take the lower middle so the threshold is an
    // attained gain value, keeping the boundary semantics exact.
    Ok(gains[gains.len() / 2 - 1])
}

// ===== Tests =====
