//! Option probing through an external command.

use std::process::{Command, Stdio};

use crashtune::space::Probe;

/// Runs `<cmd> read <option>` and `<cmd> write <option> <value>` through `sh`.
pub struct CommandProbe {
    cmd: String,
}

impl CommandProbe {
    pub fn new(cmd: String) -> Self {
        Self { cmd }
    }

    fn call(&self, args: &[&str]) -> std::io::Result<std::process::Output> {
        Command::new("sh")
            .arg("-c")
            .arg(format!("{} \"$@\"", self.cmd))
            .arg("sh")
            .args(args)
            .stdin(Stdio::null())
            .output()
    }
}

impl Probe for CommandProbe {
    fn read(&mut self, option: &str) -> Result<String, String> {
        let out = self.call(&["read", option]).map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!(
                "probe exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            ));
        }
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }

    fn write(&mut self, option: &str, value: &str) -> bool {
        self.call(&["write", option, value]).is_ok_and(|o| o.status.success())
    }
}
