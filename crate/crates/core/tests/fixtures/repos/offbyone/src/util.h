#ifndef UTIL_H
#define UTIL_H

#include <stddef.h>
#include <stdint.h>

#define UTIL_MIN(a, b) ((a) < (b) ? (a) : (b))
#define UTIL_MAX(a, b) ((a) > (b) ? (a) : (b))

enum util_status {
    UTIL_OK = 0,
    UTIL_ERR_RANGE,
    UTIL_ERR_FORMAT,
};

struct util_span {
    const char *start;
    size_t      length;
};

size_t trim_newline(char *line);
int str_starts_with(const char *s, const char *prefix);
size_t clamp_size(size_t v, size_t lo, size_t hi);
int hex_digit(int c);
enum util_status parse_u32(const char *s, uint32_t *out);
struct util_span span_from_cstr(const char *s);
int span_equals(struct util_span a, struct util_span b);

#endif
