#include <string.h>

#include "util.h"

static const char hex_chars[] = "0123456789abcdef";

size_t trim_newline(char *line)
{
    size_t len = strlen(line);

    while (len > 0 && (line[len - 1] == '\n' || line[len - 1] == '\r')) {
        line[--len] = '\0';
    }
    return len;
}

int str_starts_with(const char *s, const char *prefix)
{
    return strncmp(s, prefix, strlen(prefix)) == 0;
}

size_t clamp_size(size_t v, size_t lo, size_t hi)
{
    return UTIL_MAX(lo, UTIL_MIN(v, hi));
}

int hex_digit(int c)
{
    const char *p;

    if (c >= 'A' && c <= 'F')
        c = c - 'A' + 'a';
    p = strchr(hex_chars, c);
    return (p == NULL || c == '\0') ? -1 : (int) (p - hex_chars);
}

enum util_status parse_u32(const char *s, uint32_t *out)
{
    uint64_t acc = 0;

    if (*s == '\0')
        return UTIL_ERR_FORMAT;
    for (; *s != '\0'; s++) {
        if (*s < '0' || *s > '9')
            return UTIL_ERR_FORMAT;
        acc = acc * 10 + (uint64_t) (*s - '0');
        if (acc > UINT32_MAX)
            return UTIL_ERR_RANGE;
    }
    *out = (uint32_t) acc;
    return UTIL_OK;
}

struct util_span span_from_cstr(const char *s)
{
    struct util_span span;

    span.start = s;
    span.length = strlen(s);
    return span;
}

int span_equals(struct util_span a, struct util_span b)
{
    return a.length == b.length && memcmp(a.start, b.start, a.length) == 0;
}
