use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::Failure;

/// Overlay a JSON config object onto parsed arguments. Keys are flag names
/// (`snake_case` or `kebab-case`); a flag given on the command line always
/// wins over the file.
pub fn apply_config<T>(parsed: T, matches: &ArgMatches, config: Option<&Value>) -> Result<T, Failure>
where
    T: Serialize + DeserializeOwned,
{
    let Some(config) = config else {
        return Ok(parsed);
    };
    let Value::Object(overrides) = config else {
        return Err(Failure::Usage("config file must hold a JSON object".into()));
    };
    let mut base: Map<String, Value> = match serde_json::to_value(&parsed) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("argument structs serialize to objects"),
    };
    for (key, value) in overrides {
        let id = key.replace('-', "_");
        if id == "config" {
            continue;
        }
        if !base.contains_key(&id) {
            return Err(Failure::Usage(format!("unknown config key `{key}`")));
        }
        let from_cli = matches
            .ids()
            .any(|a| a.as_str() == id && matches.value_source(&id) == Some(ValueSource::CommandLine));
        if !from_cli {
            base.insert(id, value.clone());
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| Failure::Usage(format!("config: {e}")))
}

pub fn read_config(path: Option<&std::path::Path>) -> Result<Option<Value>, Failure> {
    let Some(path) = path else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}
