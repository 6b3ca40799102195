use std::collections::VecDeque;
use std::time::Duration;

use super::{ClientSession, Step};
use crate::wire::{decode, encode, Message, Transport, TransportMode, WireError};

/// A server-side transport whose peer is a [`ClientSession`] driven inline.
///
/// Every message crosses the codec in both directions, so the bytes are the
/// same as on a real link. The client's work happens inside `send`, which
/// makes a sequential federation fully deterministic on one thread.
pub struct LoopbackClient {
    session: ClientSession,
    outbox: VecDeque<Message>,
    closed: Option<String>,
}

impl LoopbackClient {
    pub fn new(session: ClientSession) -> Self {
        let register = session.register();
        Self {
            session,
            outbox: VecDeque::from([register]),
            closed: None,
        }
    }

    pub fn session(&self) -> &ClientSession {
        &self.session
    }

    pub fn into_session(self) -> ClientSession {
        self.session
    }
}

fn through_codec(msg: &Message) -> Result<Message, WireError> {
    decode(&encode(msg))
}

impl Transport for LoopbackClient {
    fn send(&mut self, msg: &Message) -> Result<(), WireError> {
        if let Some(why) = &self.closed {
            return Err(WireError::ConnectionLost(why.clone()));
        }
        let msg = through_codec(msg)?;
        match self.session.handle(msg) {
            Ok(Step::Idle) => {}
            Ok(Step::Reply(m)) => self.outbox.push_back(through_codec(&m)?),
            Ok(Step::Abort(m)) => {
                self.outbox.push_back(through_codec(&m)?);
                self.closed = Some("client aborted".into());
            }
            Ok(Step::Done(reason)) => self.closed = Some(format!("client finished: {reason}")),
            Err(e) => {
                self.outbox
                    .push_back(Message::finish(format!("client error: {e}")));
                self.closed = Some(e.to_string());
            }
        }
        Ok(())
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Message, WireError> {
        match self.outbox.pop_front() {
            Some(m) => Ok(m),
            None => match &self.closed {
                Some(why) => Err(WireError::ConnectionLost(why.clone())),
                None => Err(WireError::Timeout(timeout.unwrap_or_default())),
            },
        }
    }

    fn mode(&self) -> TransportMode {
        TransportMode::InProcess
    }
}
