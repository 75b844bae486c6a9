//! Signal names, delivery to child processes, and flag-style handlers.

use std::io;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

const NAMED: &[(&str, i32)] = &[
    ("SIGHUP", libc::SIGHUP),
    ("SIGINT", libc::SIGINT),
    ("SIGKILL", libc::SIGKILL),
    ("SIGTERM", libc::SIGTERM),
    ("SIGUSR1", libc::SIGUSR1),
    ("SIGUSR2", libc::SIGUSR2),
];

/// Maps `SIGUSR1`-style names (with or without the `SIG` prefix) to numbers.
pub fn signal_number(name: &str) -> Option<i32> {
    let upper = name.to_ascii_uppercase();
    let full = if upper.starts_with("SIG") { upper } else { format!("SIG{upper}") };
    NAMED.iter().find(|(n, _)| *n == full).map(|(_, s)| *s)
}

pub fn send_signal(pid: u32, signal: i32) -> io::Result<()> {
    let rc = unsafe { libc::kill(pid as libc::pid_t, signal) };
    if rc == 0 {
        Ok(())
    } else {
        Err(io::Error::last_os_error())
    }
}

/// Installs handlers that set the returned flag when any of `signals` arrives.
/// The handler does nothing else; callers poll the flag.
pub fn flag_on(signals: &[i32]) -> io::Result<Arc<AtomicBool>> {
    let flag = Arc::new(AtomicBool::new(false));
    for &s in signals {
        signal_hook::flag::register(s, flag.clone())?;
    }
    Ok(flag)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names() {
        assert_eq!(signal_number("SIGUSR1"), Some(libc::SIGUSR1));
        assert_eq!(signal_number("term"), Some(libc::SIGTERM));
        assert_eq!(signal_number("SIGFOO"), None);
    }
}
