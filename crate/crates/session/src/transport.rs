//! Client side of the framed TCP stream: one task reads, one writes.

use std::net::SocketAddr;

use copresence_core::protocol::{encode, DecodeError, FrameBuffer, Message};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::sync::mpsc;

pub const READ_CHUNK: usize = 16 * 1024;

pub struct Connection {
    /// Decoded messages; closes when the server does. A framing error ends
    /// the stream after being delivered.
    pub incoming: mpsc::Receiver<Result<Message, DecodeError>>,
    /// Dropping every clone closes the write half.
    pub outgoing: mpsc::Sender<Message>,
}

pub async fn connect(addr: SocketAddr) -> std::io::Result<Connection> {
    let stream = TcpStream::connect(addr).await?;
    stream.set_nodelay(true)?;
    let (mut rd, mut wr) = stream.into_split();
    let (in_tx, incoming) = mpsc::channel(1024);
    let (outgoing, mut out_rx) = mpsc::channel::<Message>(1024);

    tokio::spawn(async move {
        let mut fb = FrameBuffer::new();
        let mut buf = vec![0u8; READ_CHUNK];
        loop {
            let n = match rd.read(&mut buf).await {
                Ok(0) | Err(_) => return,
                Ok(n) => n,
            };
            fb.extend(&buf[..n]);
            loop {
                match fb.next_message() {
                    Ok(Some(m)) => {
                        if in_tx.send(Ok(m)).await.is_err() {
                            return;
                        }
                    }
                    Ok(None) => break,
                    Err(e @ DecodeError::FrameTooLarge(_)) => {
                        let _ = in_tx.send(Err(e)).await;
                        return;
                    }
                    Err(e) => {
                        if in_tx.send(Err(e)).await.is_err() {
                            return;
                        }
                    }
                }
            }
        }
    });

    tokio::spawn(async move {
        while let Some(m) = out_rx.recv().await {
            let Ok(bytes) = encode(&m) else { continue };
            if wr.write_all(&bytes).await.is_err() {
                return;
            }
        }
        let _ = wr.shutdown().await;
    });

    Ok(Connection { incoming, outgoing })
}
