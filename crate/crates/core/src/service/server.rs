//! TCP front end: one thread per connection, newline-delimited JSON.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use super::protocol::{event_line, Service};

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stop accepting connections and join the accept loop.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    /// Block until the accept loop exits.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn write_line(w: &Mutex<TcpStream>, line: &str) -> io::Result<()> {
    let mut w = w.lock().unwrap();
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()
}

fn connection(service: Arc<Service>, stream: TcpStream) -> io::Result<()> {
    let writer = Arc::new(Mutex::new(stream.try_clone()?));
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (reply, events) = service.handle_line(&line);
        write_line(&writer, &reply)?;
        if let Some(rx) = events {
            let w = Arc::clone(&writer);
            thread::spawn(move || {
                for e in rx {
                    if write_line(&w, &event_line(&e)).is_err() {
                        break;
                    }
                }
            });
        }
    }
    Ok(())
}

/// Bind and serve in a background thread.
pub fn serve(addr: impl ToSocketAddrs, service: Service) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let service = Arc::new(service);
    let flag = Arc::clone(&stop);
    let thread = thread::Builder::new().name("voxmag-accept".into()).spawn(move || {
        for stream in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let service = Arc::clone(&service);
            thread::spawn(move || {
                let _ = connection(service, stream);
            });
        }
    })?;
    Ok(ServerHandle { addr, stop, thread: Some(thread) })
}
