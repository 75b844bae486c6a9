//! Blocking TCP client and server for framed RPC messages.

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::wireproto::{read_message, write_message, Call, Fields, Message, RpcError, RpcResponse, WireError};

#[derive(Debug, thiserror::Error)]
pub enum CallError {
    #[error("connection failed: {0}")]
    Connect(io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("remote error {0}")]
    Remote(RpcError),
    #[error("connection closed before a response arrived")]
    Closed,
    #[error("unexpected reply: {0}")]
    Unexpected(String),
}

impl CallError {
    /// True when the failure means the server could not be reached or the
    /// connection broke, as opposed to the server answering with an error.
    pub fn is_unreachable(&self) -> bool {
        matches!(self, CallError::Connect(_) | CallError::Wire(WireError::Io(_)) | CallError::Closed)
    }

    pub fn remote_code(&self) -> Option<&str> {
        match self {
            CallError::Remote(e) => Some(&e.code),
            _ => None,
        }
    }
}

fn resolve(addr: &str) -> io::Result<SocketAddr> {
    addr.to_socket_addrs()?
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, format!("cannot resolve {addr}")))
}

/// A client connection. Calls are sequential: one request in flight.
pub struct RpcClient {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    next_id: u64,
}

impl RpcClient {
    pub fn connect(addr: &str, timeout: Duration) -> Result<RpcClient, CallError> {
        let sock = resolve(addr).map_err(CallError::Connect)?;
        let stream = TcpStream::connect_timeout(&sock, timeout).map_err(CallError::Connect)?;
        stream.set_nodelay(true).ok();
        stream.set_read_timeout(Some(timeout)).map_err(CallError::Connect)?;
        stream.set_write_timeout(Some(timeout)).map_err(CallError::Connect)?;
        let reader = BufReader::new(stream.try_clone().map_err(CallError::Connect)?);
        Ok(RpcClient { reader, writer: BufWriter::new(stream), next_id: 1 })
    }

    pub fn call(&mut self, call: Call) -> Result<Fields, CallError> {
        let id = self.next_id;
        self.next_id += 1;
        write_message(&mut self.writer, &Message::Request(call.into_request(id)))?;
        match read_message(&mut self.reader)? {
            Some(Message::Response(RpcResponse { id: rid, outcome })) if rid == id => outcome.map_err(CallError::Remote),
            Some(other) => Err(CallError::Unexpected(format!("{other:?}"))),
            None => Err(CallError::Closed),
        }
    }
}

/// Opens a connection, performs one call and closes it.
pub fn call_once(addr: &str, call: Call, timeout: Duration) -> Result<Fields, CallError> {
    RpcClient::connect(addr, timeout)?.call(call)
}

/// Handles one decoded call. Implementations must be cheap; they run on the
/// connection's thread.
pub trait Handler: Send + Sync + 'static {
    fn handle(&self, call: Call) -> Result<Fields, RpcError>;
}

impl<F> Handler for F
where
    F: Fn(Call) -> Result<Fields, RpcError> + Send + Sync + 'static,
{
    fn handle(&self, call: Call) -> Result<Fields, RpcError> {
        self(call)
    }
}

/// A listening RPC server. Dropping it stops accepting and closes open
/// connections.
pub struct RpcServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    conns: Arc<Mutex<HashMap<u64, TcpStream>>>,
    acceptor: Option<JoinHandle<()>>,
}

impl RpcServer {
    pub fn bind(listen: &str, handler: Arc<dyn Handler>) -> io::Result<RpcServer> {
        let listener = TcpListener::bind(listen)?;
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let conns: Arc<Mutex<HashMap<u64, TcpStream>>> = Arc::default();
        let acceptor = {
            let stop = stop.clone();
            let conns = conns.clone();
            thread::Builder::new().name(format!("rpc-accept-{addr}")).spawn(move || {
                let mut next_id = 0u64;
                while !stop.load(Ordering::Acquire) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            stream.set_nonblocking(false).ok();
                            stream.set_nodelay(true).ok();
                            let id = next_id;
                            next_id += 1;
                            if let Ok(clone) = stream.try_clone() {
                                conns.lock().unwrap().insert(id, clone);
                            }
                            let handler = handler.clone();
                            let conns = conns.clone();
                            let _ = thread::Builder::new().name("rpc-conn".into()).spawn(move || {
                                serve_connection(&stream, handler.as_ref());
                                conns.lock().unwrap().remove(&id);
                                let _ = stream.shutdown(Shutdown::Both);
                            });
                        }
                        Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
                        Err(e) => {
                            log::warn!("accept failed on {addr}: {e}");
                            thread::sleep(Duration::from_millis(5));
                        }
                    }
                }
            })?
        };
        Ok(RpcServer { addr, stop, conns, acceptor: Some(acceptor) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        for (_, s) in self.conns.lock().unwrap().drain() {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for RpcServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn serve_connection(stream: &TcpStream, handler: &dyn Handler) {
    let mut reader = BufReader::new(stream);
    let mut writer = BufWriter::new(stream);
    loop {
        let reply = match read_message(&mut reader) {
            Ok(Some(Message::Request(req))) => {
                let outcome = match req.call() {
                    Ok(call) => handler.handle(call),
                    Err(e) => Err(RpcError::new("ProtocolError", e.to_string())),
                };
                RpcResponse { id: req.id, outcome }
            }
            Ok(Some(Message::Response(_))) => {
                RpcResponse { id: 0, outcome: Err(RpcError::new("ProtocolError", "responses are not accepted here")) }
            }
            Ok(None) => return,
            Err(WireError::Frame(e)) => {
                // The stream position is unknown after a bad frame; answer and hang up.
                let _ = write_message(
                    &mut writer,
                    &Message::Response(RpcResponse { id: 0, outcome: Err(RpcError::new("ProtocolError", e.to_string())) }),
                );
                return;
            }
            Err(WireError::Io(_)) => return,
        };
        if write_message(&mut writer, &Message::Response(reply)).is_err() {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields;
    use crate::wireproto::FieldsExt;
    use std::io::Write;

    fn echo_server() -> RpcServer {
        let handler = |call: Call| -> Result<Fields, RpcError> {
            match call {
                Call::ActiveServer { node_name } => Ok(fields! { "who" => node_name.unwrap_or_default() }),
                other => Err(RpcError::new("Unsupported", other.method().as_str())),
            }
        };
        RpcServer::bind("127.0.0.1:0", Arc::new(handler)).unwrap()
    }

    #[test]
    fn call_and_remote_error() {
        let server = echo_server();
        let addr = server.local_addr().to_string();
        let mut client = RpcClient::connect(&addr, Duration::from_secs(2)).unwrap();
        let r = client.call(Call::ActiveServer { node_name: Some("j-worker-1".into()) }).unwrap();
        assert_eq!(r.str_field("who"), Some("j-worker-1"));
        let err = client.call(Call::JobInit { node_name: "j-worker-1".into(), address: None }).unwrap_err();
        assert_eq!(err.remote_code(), Some("Unsupported"));
        // connection stays usable after a remote error
        assert!(client.call(Call::ActiveServer { node_name: None }).is_ok());
    }

    #[test]
    fn bind_conflict() {
        let server = echo_server();
        let addr = server.local_addr().to_string();
        let handler = |_: Call| -> Result<Fields, RpcError> { Ok(Fields::new()) };
        assert!(RpcServer::bind(&addr, Arc::new(handler)).is_err());
    }

    #[test]
    fn garbage_frame_gets_protocol_error_then_close() {
        let server = echo_server();
        let mut s = TcpStream::connect(server.local_addr()).unwrap();
        s.write_all(&[0, 0, 0, 3, b'x', b'y', b'z']).unwrap();
        let mut r = BufReader::new(s);
        match read_message(&mut r).unwrap() {
            Some(Message::Response(resp)) => assert_eq!(resp.outcome.unwrap_err().code, "ProtocolError"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_message(&mut r).unwrap().is_none());
    }

    #[test]
    fn unreachable() {
        let err = call_once("127.0.0.1:1", Call::ActiveServer { node_name: None }, Duration::from_millis(200)).unwrap_err();
        assert!(err.is_unreachable());
    }
}
