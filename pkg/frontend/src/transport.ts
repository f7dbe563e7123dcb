/**
 * Byte transport abstraction under the protocol codec. The browser build
 * uses a WebSocket carrying the same length-prefixed frames as raw TCP
 * (a trivial ws-to-tcp bridge suffices server-side); tests use a node TCP
 * socket directly.
 */

export interface Transport {
  send(bytes: Uint8Array): void;
  close(): void;
  onData(handler: (chunk: Uint8Array) => void): void;
  onClose(handler: () => void): void;
}

export type TransportFactory = () => Promise<Transport>;

export class WebSocketTransport implements Transport {
  private dataHandler: (chunk: Uint8Array) => void = () => {};
  private closeHandler: () => void = () => {};

  private constructor(private socket: WebSocket) {
    socket.binaryType = "arraybuffer";
    socket.onmessage = (event) => {
      this.dataHandler(new Uint8Array(event.data as ArrayBuffer));
    };
    socket.onclose = () => this.closeHandler();
  }

  static connect(url: string): Promise<WebSocketTransport> {
    return new Promise((resolve, reject) => {
      const socket = new WebSocket(url);
      socket.onopen = () => resolve(new WebSocketTransport(socket));
      socket.onerror = () => reject(new Error(`cannot connect to ${url}`));
    });
  }

  send(bytes: Uint8Array): void {
    this.socket.send(bytes);
  }

  close(): void {
    this.socket.close();
  }

  onData(handler: (chunk: Uint8Array) => void): void {
    this.dataHandler = handler;
  }

  onClose(handler: () => void): void {
    this.closeHandler = handler;
  }
}
