//! Exit-code discipline: 1 usage/config, 2 data, 3 numeric failure.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn usage(msg: String) -> Self {
        CliError::Usage(msg)
    }

    pub fn data(msg: String) -> Self {
        CliError::Data(msg)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn from_audio(e: kws_nas::audio::AudioError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<kws_nas::Error> for CliError {
    fn from(e: kws_nas::Error) -> Self {
        if e.is_numeric() {
            return CliError::Numeric(e.to_string());
        }
        match &e {
            kws_nas::Error::Audio(_) | kws_nas::Error::Io(_) => CliError::Data(e.to_string()),
            kws_nas::Error::Model(kws_nas::model::ModelError::InvalidConfig { .. }) => {
                CliError::Usage(e.to_string())
            }
            kws_nas::Error::Train(kws_nas::train::TrainError::InvalidConfig { .. }) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<kws_nas::search::SearchError> for CliError {
    fn from(e: kws_nas::search::SearchError) -> Self {
        CliError::from(kws_nas::Error::from(e))
    }
}

impl From<kws_nas::model::ModelError> for CliError {
    fn from(e: kws_nas::model::ModelError) -> Self {
        CliError::from(kws_nas::Error::from(e))
    }
}

impl From<kws_nas::train::TrainError> for CliError {
    fn from(e: kws_nas::train::TrainError) -> Self {
        CliError::from(kws_nas::Error::from(e))
    }
}
