use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::http::{header, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::Router;

use crate::api::ApiError;
use crate::service::Service;

/// Routes every request through [`Service::handle`].
pub fn router(service: Arc<Service>) -> Router {
    Router::new().fallback(move |method: Method, uri: Uri, body: Bytes| {
        let service = Arc::clone(&service);
        async move { dispatch(service, method, uri, body).await }
    })
}

async fn dispatch(service: Arc<Service>, method: Method, uri: Uri, body: Bytes) -> HttpResponse {
    let text = match String::from_utf8(body.to_vec()) {
        Ok(t) => t,
        Err(_) => {
            let e = ApiError::bad_request("request body is not UTF-8");
            let status = StatusCode::from_u16(e.status()).expect("valid status");
            let body = serde_json::to_string(&e).expect("errors serialize");
            return (status, [(header::CONTENT_TYPE, "application/json")], body).into_response();
        }
    };
    let path = uri.path().to_string();
    // session locks are plain mutexes, so keep them off the async workers
    let result = tokio::task::spawn_blocking(move || service.handle(method.as_str(), &path, &text)).await;
    match result {
        Ok(r) => {
            let status = StatusCode::from_u16(r.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            (status, [(header::CONTENT_TYPE, r.content_type)], r.body).into_response()
        }
        Err(e) => {
            let err = ApiError::new(crate::api::ErrorCode::Invariant, format!("request handler failed: {e}"));
            let body = serde_json::to_string(&err).expect("errors serialize");
            (StatusCode::INTERNAL_SERVER_ERROR, [(header::CONTENT_TYPE, "application/json")], body).into_response()
        }
    }
}

pub async fn serve(service: Arc<Service>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(service)).await
}
