//! Altitude-indexed atmosphere: density, temperature, speed of sound and wind.
//!
//! Two flavours are supported: an isothermal exponential model evaluated in
//! closed form, and a tabulated profile (usually loaded from CSV) that is
//! linearly interpolated in altitude. Altitudes are metres above the MOLA
//! reference.

use std::io::Read;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

/// Ratio of specific heats for the CO2 atmosphere.
pub const CO2_GAMMA: f64 = 1.29;
/// Specific gas constant of CO2, J/(kg·K).
pub const CO2_GAS_CONSTANT: f64 = 188.92;

/// Default surface density at 0 m MOLA, kg/m³.
pub const DEFAULT_SURFACE_DENSITY: f64 = 0.0158;
/// Default density scale height, m.
pub const DEFAULT_SCALE_HEIGHT: f64 = 11_100.0;
/// Default isothermal temperature, K.
pub const DEFAULT_TEMPERATURE: f64 = 210.0;

#[derive(Debug, Error)]
pub enum AtmosphereError {
    #[error("{0} must be strictly positive (got {1})")]
    NonPositive(&'static str, f64),
    #[error("atmosphere profile needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("duplicate altitude {0} m in profile")]
    DuplicateAltitude(f64),
    #[error("row {row}: {column} must be strictly positive (got {value})")]
    InvalidValue {
        row: usize,
        column: &'static str,
        value: f64,
    },
    #[error("row {row}: cannot parse {column} value {text:?}")]
    NonNumeric { row: usize, column: String, text: String },
    #[error("missing required column {0:?}")]
    MissingColumn(&'static str),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One node of a tabulated profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileNode {
    pub altitude: f64,
    pub density: f64,
    pub temperature: f64,
    /// East, north, up components, m/s.
    pub wind: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Profile {
    Exponential {
        surface_density: f64,
        scale_height: f64,
        temperature: f64,
    },
    Tabulated(Vec<ProfileNode>),
}

/// Local atmospheric conditions at one altitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ambient {
    pub density: f64,
    pub temperature: f64,
    pub sound_speed: f64,
    pub wind: Vector3<f64>,
    /// Set when the query fell outside a tabulated profile and the end
    /// segment was continued.
    pub extrapolated: bool,
}

impl Ambient {
    /// Still air of the given density; temperature and sound speed use the
    /// default isothermal values.
    pub fn still(density: f64) -> Self {
        Self {
            density,
            temperature: DEFAULT_TEMPERATURE,
            sound_speed: (CO2_GAMMA * CO2_GAS_CONSTANT * DEFAULT_TEMPERATURE).sqrt(),
            wind: Vector3::zeros(),
            extrapolated: false,
        }
    }
}

/// Immutable atmosphere model; safe to share between threads.
#[derive(Debug, Clone, PartialEq)]
pub struct AtmosphereModel {
    profile: Profile,
    gas_gamma: f64,
    gas_constant: f64,
}

impl Default for AtmosphereModel {
    fn default() -> Self {
        Self::builtin_exponential(DEFAULT_SURFACE_DENSITY, DEFAULT_SCALE_HEIGHT, DEFAULT_TEMPERATURE)
            .expect("default atmosphere constants are valid")
    }
}

fn require_positive(name: &'static str, value: f64) -> Result<(), AtmosphereError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(AtmosphereError::NonPositive(name, value))
    }
}

impl AtmosphereModel {
    /// Isothermal exponential atmosphere with zero wind.
    pub fn builtin_exponential(
        surface_density: f64,
        scale_height: f64,
        temperature: f64,
    ) -> Result<Self, AtmosphereError> {
        require_positive("surface_density", surface_density)?;
        require_positive("scale_height", scale_height)?;
        require_positive("temperature", temperature)?;
        Ok(Self {
            profile: Profile::Exponential {
                surface_density,
                scale_height,
                temperature,
            },
            gas_gamma: CO2_GAMMA,
            gas_constant: CO2_GAS_CONSTANT,
        })
    }

    /// Tabulated profile. Nodes are sorted by altitude; duplicate altitudes,
    /// non-positive densities or temperatures are rejected.
    pub fn tabulated(mut nodes: Vec<ProfileNode>) -> Result<Self, AtmosphereError> {
        if nodes.len() < 2 {
            return Err(AtmosphereError::TooFewNodes(nodes.len()));
        }
        for (row, node) in nodes.iter().enumerate() {
            if !(node.density > 0.0 && node.density.is_finite()) {
                return Err(AtmosphereError::InvalidValue {
                    row: row + 1,
                    column: "density_kgm3",
                    value: node.density,
                });
            }
            if !(node.temperature > 0.0 && node.temperature.is_finite()) {
                return Err(AtmosphereError::InvalidValue {
                    row: row + 1,
                    column: "temperature_K",
                    value: node.temperature,
                });
            }
        }
        nodes.sort_by(|a, b| a.altitude.total_cmp(&b.altitude));
        if let Some(pair) = nodes.windows(2).find(|w| w[0].altitude >= w[1].altitude) {
            return Err(AtmosphereError::DuplicateAltitude(pair[1].altitude));
        }
        Ok(Self {
            profile: Profile::Tabulated(nodes),
            gas_gamma: CO2_GAMMA,
            gas_constant: CO2_GAS_CONSTANT,
        })
    }

    /// Parse a CSV profile with header
    /// `altitude_m,density_kgm3,temperature_K[,wind_east_ms,wind_north_ms,wind_up_ms]`.
    /// Lines starting with `#` are ignored; column order is free.
    pub fn load_profile<R: Read>(reader: R) -> Result<Self, AtmosphereError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let alt_col = find("altitude_m").ok_or(AtmosphereError::MissingColumn("altitude_m"))?;
        let rho_col = find("density_kgm3").ok_or(AtmosphereError::MissingColumn("density_kgm3"))?;
        let temp_col = find("temperature_K").ok_or(AtmosphereError::MissingColumn("temperature_K"))?;
        let wind_cols = [find("wind_east_ms"), find("wind_north_ms"), find("wind_up_ms")];

        let mut nodes = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let row = i + 1;
            let cell = |col: usize| -> Result<f64, AtmosphereError> {
                let text = record.get(col).unwrap_or("");
                text.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| AtmosphereError::NonNumeric {
                        row,
                        column: headers.get(col).unwrap_or("?").to_string(),
                        text: text.to_string(),
                    })
            };
            let mut wind = Vector3::zeros();
            for (axis, col) in wind_cols.iter().enumerate() {
                if let Some(col) = col {
                    wind[axis] = cell(*col)?;
                }
            }
            nodes.push(ProfileNode {
                altitude: cell(alt_col)?,
                density: cell(rho_col)?,
                temperature: cell(temp_col)?,
                wind,
            });
        }
        Self::tabulated(nodes)
    }

    pub fn load_profile_file(path: &Path) -> Result<Self, AtmosphereError> {
        let file = std::fs::File::open(path).map_err(|source| AtmosphereError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::load_profile(file)
    }

    pub fn gas_gamma(&self) -> f64 {
        self.gas_gamma
    }

    pub fn gas_constant(&self) -> f64 {
        self.gas_constant
    }

    /// Profile nodes, or `None` for the closed-form model.
    pub fn nodes(&self) -> Option<&[ProfileNode]> {
        match &self.profile {
            Profile::Tabulated(nodes) => Some(nodes),
            Profile::Exponential { .. } => None,
        }
    }

    /// Altitude span covered without extrapolation.
    pub fn span(&self) -> (f64, f64) {
        match &self.profile {
            Profile::Exponential { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Profile::Tabulated(nodes) => (nodes[0].altitude, nodes[nodes.len() - 1].altitude),
        }
    }

    pub fn sound_speed(&self, temperature: f64) -> f64 {
        (self.gas_gamma * self.gas_constant * temperature).sqrt()
    }

    pub fn density(&self, altitude: f64) -> f64 {
        self.ambient_at(altitude).density
    }

    pub fn ambient_at(&self, altitude: f64) -> Ambient {
        match &self.profile {
            Profile::Exponential {
                surface_density,
                scale_height,
                temperature,
            } => Ambient {
                density: surface_density * (-altitude / scale_height).exp(),
                temperature: *temperature,
                sound_speed: self.sound_speed(*temperature),
                wind: Vector3::zeros(),
                extrapolated: false,
            },
            Profile::Tabulated(nodes) => self.interpolate(nodes, altitude),
        }
    }

    fn interpolate(&self, nodes: &[ProfileNode], altitude: f64) -> Ambient {
        let last = nodes.len() - 1;
        let extrapolated = altitude < nodes[0].altitude || altitude > nodes[last].altitude;
        // index of the segment [i, i+1] used, clamped to the end segments
        let i = match nodes.binary_search_by(|n| n.altitude.total_cmp(&altitude)) {
            Ok(i) => i.min(last - 1),
            Err(i) => i.saturating_sub(1).min(last - 1),
        };
        let (a, b) = (&nodes[i], &nodes[i + 1]);
        let w = (altitude - a.altitude) / (b.altitude - a.altitude);
        let lerp = |x: f64, y: f64| x + w * (y - x);
        let density = lerp(a.density, b.density).max(0.0);
        let temperature = lerp(a.temperature, b.temperature).max(1.0);
        Ambient {
            density,
            temperature,
            sound_speed: self.sound_speed(temperature),
            wind: a.wind + (b.wind - a.wind) * w,
            extrapolated,
        }
    }
}
