use serde_json::{json, Value};

/// JSON Schema (draft 2020-12) describing the `.dadl` v0.1 document grammar.
pub fn document_schema() -> Value {
    let duration = json!({
        "oneOf": [
            { "type": "string", "pattern": "^[0-9]+(\\.[0-9]+)?\\s*(ms|s|m|h)?$" },
            { "type": "number", "minimum": 0 }
        ]
    });
    let credential = json!({ "type": "string", "pattern": "^[^\\s/]+/\\S+$" });
    let method = json!({ "enum": ["GET", "POST", "PUT", "PATCH", "DELETE", "HEAD"] });
    let param = json!({
        "type": "object",
        "additionalProperties": false,
        "properties": {
            "type": { "type": "string" },
            "$ref": { "type": "string" },
            "required": { "type": "boolean" },
            "default": {},
            "location": { "enum": ["path", "query", "body", "header"] },
            "in": { "enum": ["path", "query", "body", "header"] },
            "description": { "type": "string" },
            "enum": { "type": "array" },
            "items": {}
        }
    });
    let pagination = json!({
        "oneOf": [
            { "const": "none" },
            {
                "type": "object",
                "additionalProperties": false,
                "required": ["strategy"],
                "properties": {
                    "strategy": { "enum": ["cursor", "offset", "page", "link_header", "none"] },
                    "request_params": {
                        "type": "object",
                        "additionalProperties": false,
                        "properties": {
                            "cursor": { "type": "string" },
                            "offset": { "type": "string" },
                            "page": { "type": "string" },
                            "page_size": { "type": "string" }
                        }
                    },
                    "response_paths": {
                        "type": "object",
                        "additionalProperties": false,
                        "properties": {
                            "next_cursor": { "type": "string" },
                            "items": { "type": "string" },
                            "total": { "type": "string" }
                        }
                    },
                    "page_size": { "type": "integer", "minimum": 1 },
                    "max_pages": { "type": "integer", "minimum": 1 },
                    "behavior": { "enum": ["auto", "expose"] }
                }
            }
        ]
    });
    let tool = json!({
        "type": "object",
        "additionalProperties": false,
        "required": ["method", "path"],
        "properties": {
            "method": method,
            "path": { "type": "string", "pattern": "^/" },
            "description": { "type": "string" },
            "access": { "type": "string", "minLength": 1 },
            "params": { "type": "object", "additionalProperties": { "$ref": "#/$defs/param" } },
            "headers": { "type": "object", "additionalProperties": { "type": "string" } },
            "pagination": { "$ref": "#/$defs/pagination" },
            "result_path": { "type": "string" },
            "transform": { "type": "string" },
            "max_items": { "type": "integer", "minimum": 1 },
            "allow_jq_override": { "type": "boolean" },
            "timeout": { "$ref": "#/$defs/duration" },
            "examples": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": { "params": {}, "note": { "type": "string" }, "response": {} }
                }
            }
        }
    });
    let auth = json!({
        "oneOf": [
            {
                "type": "object",
                "required": ["type", "credential"],
                "properties": {
                    "type": { "const": "bearer" },
                    "credential": { "$ref": "#/$defs/credential" },
                    "header_name": { "type": "string" },
                    "prefix": { "type": "string" }
                }
            },
            {
                "type": "object",
                "required": ["type", "username", "password"],
                "properties": {
                    "type": { "const": "basic" },
                    "username": { "$ref": "#/$defs/credential" },
                    "password": { "$ref": "#/$defs/credential" }
                }
            },
            {
                "type": "object",
                "required": ["type", "token_url", "client_id", "client_secret"],
                "properties": {
                    "type": { "enum": ["oauth2_client_credentials", "oauth2"] },
                    "token_url": { "type": "string", "format": "uri" },
                    "client_id": { "$ref": "#/$defs/credential" },
                    "client_secret": { "$ref": "#/$defs/credential" },
                    "scopes": { "type": "array", "items": { "type": "string" } },
                    "refresh_margin": { "$ref": "#/$defs/duration" }
                }
            },
            {
                "type": "object",
                "required": ["type", "login", "token_extract", "token_header"],
                "properties": {
                    "type": { "const": "session" },
                    "login": {
                        "type": "object",
                        "required": ["path"],
                        "properties": {
                            "method": method,
                            "path": { "type": "string" },
                            "body": {
                                "type": "object",
                                "additionalProperties": {
                                    "oneOf": [
                                        {
                                            "type": "object",
                                            "required": ["credential"],
                                            "properties": { "credential": { "$ref": "#/$defs/credential" } }
                                        },
                                        {}
                                    ]
                                }
                            }
                        }
                    },
                    "token_extract": { "type": "string" },
                    "token_header": { "type": "string" },
                    "token_prefix": { "type": "string" },
                    "relogin_on": { "type": "array", "items": { "type": "integer" } }
                }
            },
            {
                "type": "object",
                "required": ["type", "credential", "name"],
                "properties": {
                    "type": { "const": "api_key" },
                    "credential": { "$ref": "#/$defs/credential" },
                    "placement": { "enum": ["header", "query"] },
                    "name": { "type": "string" }
                }
            }
        ]
    });

    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "DADL document (v0.1 profile)",
        "type": "object",
        "required": ["backend", "tools"],
        "patternProperties": { "^_": {} },
        "additionalProperties": false,
        "properties": {
            "spec": { "type": "string" },
            "credits": { "type": "array", "items": { "type": "string" } },
            "source_name": { "type": "string" },
            "source_url": { "type": "string" },
            "date": { "type": "string" },
            "contains_code": { "type": "boolean" },
            "backend": {
                "type": "object",
                "additionalProperties": false,
                "required": ["name", "type", "base_url"],
                "properties": {
                    "name": { "type": "string" },
                    "type": { "const": "rest" },
                    "version": { "type": "string" },
                    "base_url": { "type": "string", "format": "uri" },
                    "description": { "type": "string" }
                }
            },
            "auth": auth,
            "defaults": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "pagination": { "$ref": "#/$defs/pagination" },
                    "result_path": { "type": "string" },
                    "transform": { "type": "string" },
                    "max_items": { "type": "integer", "minimum": 1 },
                    "allow_jq_override": { "type": "boolean" },
                    "timeout": { "$ref": "#/$defs/duration" },
                    "headers": { "type": "object", "additionalProperties": { "type": "string" } }
                }
            },
            "types": { "type": "object" },
            "tools": {
                "type": "object",
                "propertyNames": { "pattern": "^[a-z][a-z0-9_]*$" },
                "additionalProperties": { "$ref": "#/$defs/tool" }
            },
            "composites": {
                "type": "object",
                "propertyNames": { "pattern": "^[a-z][a-z0-9_]*$" },
                "additionalProperties": {
                    "type": "object",
                    "additionalProperties": false,
                    "required": ["code"],
                    "properties": {
                        "description": { "type": "string" },
                        "params": { "type": "object", "additionalProperties": { "$ref": "#/$defs/param" } },
                        "timeout": { "$ref": "#/$defs/duration" },
                        "max_api_calls": { "type": "integer", "minimum": 1 },
                        "code": { "type": "string", "minLength": 1 },
                        "access": { "type": "string", "minLength": 1 }
                    }
                }
            },
            "hints": {
                "type": "object",
                "additionalProperties": {
                    "type": "object",
                    "additionalProperties": { "type": ["string", "number", "boolean"] }
                }
            },
            "coverage": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "tools_defined": { "type": "integer", "minimum": 0 },
                    "estimated_total": { "type": "integer", "minimum": 0 },
                    "percent": { "type": "number" },
                    "focus": { "type": "string" },
                    "missing": { "type": "string" },
                    "last_reviewed": { "type": "string" }
                }
            },
            "error_policy": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "message_path": { "type": "string" },
                    "code_path": { "type": "string" },
                    "terminal_statuses": { "type": "array", "items": { "type": "integer" } },
                    "retryable_statuses": { "type": "array", "items": { "type": "integer" } },
                    "retry": {
                        "type": "object",
                        "additionalProperties": false,
                        "properties": {
                            "max_attempts": { "type": "integer", "minimum": 1 },
                            "base_delay": { "$ref": "#/$defs/duration" },
                            "multiplier": { "type": "number", "minimum": 1 },
                            "max_delay": { "$ref": "#/$defs/duration" }
                        }
                    }
                }
            },
            "rate_limit": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "remaining_header": { "type": "string" },
                    "retry_after_header": { "type": "string" },
                    "reset_header": { "type": "string" },
                    "pause_threshold": { "type": "integer", "minimum": 0 },
                    "shared_per_credential": { "type": "boolean" },
                    "default_pause": { "$ref": "#/$defs/duration" }
                }
            }
        },
        "$defs": {
            "duration": duration,
            "credential": credential,
            "param": param,
            "pagination": pagination,
            "tool": tool
        }
    })
}
