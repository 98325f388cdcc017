use std::fmt::Display;

/// Exit status 1: bad flags or configuration.
pub const USAGE: u8 = 1;
/// Exit status 2: unreadable or invalid input data.
pub const DATA: u8 = 2;
/// Exit status 3: anything that went wrong while running.
pub const RUNTIME: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

pub trait OrFail<T> {
    fn usage(self) -> Outcome<T>;
    fn data(self) -> Outcome<T>;
    fn runtime(self) -> Outcome<T>;
}

impl<T, E: Display> OrFail<T> for Result<T, E> {
    fn usage(self) -> Outcome<T> {
        self.map_err(|e| Failure::new(USAGE, e))
    }

    fn data(self) -> Outcome<T> {
        self.map_err(|e| Failure::new(DATA, e))
    }

    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| Failure::new(RUNTIME, e))
    }
}
