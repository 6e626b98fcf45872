use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use hyposcore::llm::{complete, complete_batch, EndpointConfig, HttpTransport, LlmError, MockTransport};
use proptest::prelude::*;
use serde_json::Value;

fn cfg(max_retries: u32, max_parallel: usize) -> EndpointConfig {
    EndpointConfig {
        max_retries,
        max_parallel,
        initial_backoff: Duration::ZERO,
        ..EndpointConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn retry_count_is_exact(failures in 0usize..6, max_retries in 0u32..6) {
        let mock = MockTransport::new().with_reply("p", "ok").fail_first(failures);
        let result = complete(&mock, "p", &cfg(max_retries, 1));
        let expected = (failures + 1).min(max_retries as usize + 1);
        prop_assert_eq!(mock.attempts(), expected);
        prop_assert_eq!(result.is_ok(), failures <= max_retries as usize);
    }

    #[test]
    fn batch_keeps_order_and_bound(n in 1usize..24, max_parallel in 1usize..6) {
        let prompts: Vec<String> = (0..n).map(|i| format!("prompt {i}")).collect();
        let mut mock = MockTransport::new();
        for (i, p) in prompts.iter().enumerate() {
            mock = mock.with_reply(p, &format!("reply {i}")).with_delay(p, Duration::from_millis((i % 3) as u64));
        }
        let results = complete_batch(&mock, &prompts, &cfg(0, max_parallel));
        for (i, r) in results.iter().enumerate() {
            prop_assert_eq!(r.as_ref().unwrap(), &format!("reply {i}"));
        }
        prop_assert!(mock.max_in_flight() <= max_parallel);
    }
}

/// Serve canned HTTP responses in order, forwarding each request's head and body.
fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<(String, String)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
                head.push_str(&line);
            }
            let mut request_body = vec![0; length];
            reader.read_exact(&mut request_body).unwrap();
            tx.send((head, String::from_utf8(request_body).unwrap())).unwrap();
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn chat_reply(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn http_posts_chat_completion_and_retries_429() {
    let (url, rx) = serve(vec![(429, "{}".into()), (200, chat_reply(r#"{"correction": "你好"}"#))]);
    let config = EndpointConfig {
        base_url: url,
        model_name: "test-model".into(),
        ..cfg(2, 1)
    };
    let transport = HttpTransport::new("secret", &config);
    let reply = complete(&transport, "提示", &config).unwrap();
    assert_eq!(reply, r#"{"correction": "你好"}"#);

    for _ in 0..2 {
        let (head, body) = rx.recv().unwrap();
        assert!(head.starts_with("POST /v1/chat/completions "), "{head}");
        assert!(
            head.to_ascii_lowercase().contains("authorization: bearer secret"),
            "{head}"
        );
        let body: Value = serde_json::from_str(&body).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "提示");
    }
}

#[test]
fn http_client_errors_are_fatal() {
    let (url, _rx) = serve(vec![(401, r#"{"error": "bad key"}"#.into())]);
    let config = EndpointConfig {
        base_url: url,
        ..cfg(3, 1)
    };
    let err = complete(&HttpTransport::new("k", &config), "p", &config).unwrap_err();
    assert!(matches!(err, LlmError::Rejected(ref m) if m.contains("401")), "{err}");
}

#[test]
fn http_server_errors_exhaust_retries() {
    let (url, _rx) = serve(vec![(500, "{}".into()), (503, "{}".into())]);
    let config = EndpointConfig {
        base_url: url,
        ..cfg(1, 1)
    };
    let err = complete(&HttpTransport::new("k", &config), "p", &config).unwrap_err();
    assert!(matches!(err, LlmError::TransportExhausted { attempts: 2, .. }), "{err}");
}
