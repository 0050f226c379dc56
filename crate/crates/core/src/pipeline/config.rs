use std::fs;
use std::path::{Path, PathBuf};

use super::PipelineError;
use crate::detect::{
    default_cicada_rules, default_rain_rules, load_rules, DecisionTree, SilenceConfig,
};
use crate::enhance::EnhanceConfig;
use crate::spectral::CicadaBandConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub long_split_s: f64,
    pub detect_split_s: f64,
    pub silence_split_s: f64,
    pub target_rate_hz: u32,
    pub hpf_cutoff_hz: f64,
    pub silence: SilenceConfig,
    pub enhance: EnhanceConfig,
    pub cicada_band: CicadaBandConfig,
    /// `None` selects the bundled rules.
    pub rain_rules: Option<PathBuf>,
    pub cicada_rules: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            long_split_s: 120.0,
            detect_split_s: 15.0,
            silence_split_s: 5.0,
            target_rate_hz: 22050,
            hpf_cutoff_hz: 1000.0,
            silence: SilenceConfig::default(),
            enhance: EnhanceConfig::default(),
            cicada_band: CicadaBandConfig::default(),
            rain_rules: None,
            cicada_rules: None,
        }
    }
}

/// The rain and cicada classifiers used by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Rules {
    pub rain: DecisionTree,
    pub cicada: DecisionTree,
}

impl Default for Rules {
    fn default() -> Self {
        Rules {
            rain: default_rain_rules(),
            cicada: default_cicada_rules(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .parse()
        .map_err(|_| PipelineError::Config(format!("bad value {value:?} for {key}")))
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(self.long_split_s >= self.detect_split_s
            && self.detect_split_s >= self.silence_split_s
            && self.silence_split_s > 0.0)
        {
            return bad("need long_split_s >= detect_split_s >= silence_split_s > 0");
        }
        let ratio = self.detect_split_s / self.silence_split_s;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return bad("detect_split_s must be a multiple of silence_split_s");
        }
        if self.target_rate_hz == 0
            || !(self.hpf_cutoff_hz > 0.0 && self.hpf_cutoff_hz < self.target_rate_hz as f64 / 2.0)
        {
            return bad("hpf_cutoff_hz must lie between 0 and target_rate_hz / 2");
        }
        self.silence
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.enhance
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    /// Sets one field by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        match key {
            "long_split_s" => self.long_split_s = parse(key, value)?,
            "detect_split_s" => self.detect_split_s = parse(key, value)?,
            "silence_split_s" => {
                self.silence_split_s = parse(key, value)?;
                self.silence.chunk_length_s = self.silence_split_s;
            }
            "target_rate_hz" => self.target_rate_hz = parse(key, value)?,
            "hpf_cutoff_hz" => self.hpf_cutoff_hz = parse(key, value)?,
            "snr_threshold" => self.silence.snr_threshold = parse(key, value)?,
            "snr_norm_db" => self.silence.snr_norm_db = parse(key, value)?,
            "mmse_alpha" => self.enhance.alpha = parse(key, value)?,
            "gain_floor_db" => self.enhance.gain_floor_db = parse(key, value)?,
            "noise_init_frames" => self.enhance.noise_init_frames = parse(key, value)?,
            "cicada_median_ratio" => self.cicada_band.median_ratio = parse(key, value)?,
            "cicada_persistence" => self.cicada_band.persistence = parse(key, value)?,
            "cicada_min_width_hz" => self.cicada_band.min_width_hz = parse(key, value)?,
            "rain_rules" => self.rain_rules = Some(PathBuf::from(value)),
            "cicada_rules" => self.cicada_rules = Some(PathBuf::from(value)),
            _ => return Err(PipelineError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), PipelineError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("line {}: expected `key = value`", i + 1))
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<PipelineConfig, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Effective values in the config-file syntax.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        kv("long_split_s", self.long_split_s.to_string());
        kv("detect_split_s", self.detect_split_s.to_string());
        kv("silence_split_s", self.silence_split_s.to_string());
        kv("target_rate_hz", self.target_rate_hz.to_string());
        kv("hpf_cutoff_hz", self.hpf_cutoff_hz.to_string());
        kv("snr_threshold", self.silence.snr_threshold.to_string());
        kv("snr_norm_db", self.silence.snr_norm_db.to_string());
        kv("mmse_alpha", self.enhance.alpha.to_string());
        kv("gain_floor_db", self.enhance.gain_floor_db.to_string());
        kv(
            "noise_init_frames",
            self.enhance.noise_init_frames.to_string(),
        );
        kv(
            "cicada_median_ratio",
            self.cicada_band.median_ratio.to_string(),
        );
        kv(
            "cicada_persistence",
            self.cicada_band.persistence.to_string(),
        );
        kv(
            "cicada_min_width_hz",
            self.cicada_band.min_width_hz.to_string(),
        );
        if let Some(p) = &self.rain_rules {
            kv("rain_rules", p.display().to_string());
        }
        if let Some(p) = &self.cicada_rules {
            kv("cicada_rules", p.display().to_string());
        }
        out
    }

    /// Loads the configured rule files, falling back to the bundled rules.
    pub fn load_rules(&self) -> Result<Rules, PipelineError> {
        let load = |p: &Option<PathBuf>, fallback: fn() -> DecisionTree| match p {
            Some(path) => load_rules(path).map_err(PipelineError::from),
            None => Ok(fallback()),
        };
        Ok(Rules {
            rain: load(&self.rain_rules, default_rain_rules)?,
            cicada: load(&self.cicada_rules, default_cicada_rules)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!(
            (
                c.long_split_s,
                c.detect_split_s,
                c.silence_split_s,
                c.silence.snr_threshold
            ),
            (120.0, 15.0, 5.0, 0.2)
        );
        assert_eq!((c.target_rate_hz, c.hpf_cutoff_hz), (22050, 1000.0));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn text_round_trip() {
        let mut c = PipelineConfig::default();
        c.apply_text(
            "# tuned\ndetect_split_s = 10\nsnr_threshold=0.25 # lower\nrain_rules = /tmp/r.rules\n",
        )
        .unwrap();
        assert_eq!(c.detect_split_s, 10.0);
        assert_eq!(c.silence.snr_threshold, 0.25);
        let mut d = PipelineConfig::default();
        d.apply_text(&c.to_config_text()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn invalid_config() {
        let mut c = PipelineConfig::default();
        assert!(c.apply_text("nope = 1\n").is_err());
        assert!(c.apply_text("long_split_s\n").is_err());
        assert!(c.apply_text("long_split_s = abc\n").is_err());
        c.detect_split_s = 12.0;
        assert!(c.validate().is_err());
        let c = PipelineConfig {
            long_split_s: 10.0,
            ..PipelineConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
