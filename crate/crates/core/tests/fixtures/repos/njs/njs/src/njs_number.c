#include <math.h>

#include "njs_value.h"

#define NJS_MAX_SAFE_INTEGER  ((1LL << 53) - 1)

const njs_value_t  njs_value_undefined = { NJS_UNDEFINED, { 0 } };
const njs_value_t  njs_value_null = { NJS_NULL, { 0 } };

double
njs_number(const njs_value_t *value)
{
    return value->u.number;
}


void
njs_set_number(njs_value_t *value, double num)
{
    value->type = NJS_NUMBER;
    value->u.number = num;
}


int
njs_number_is_integer(double num)
{
    return isfinite(num) && trunc(num) == num;
}


int
njs_number_is_safe_integer(double num)
{
    return njs_number_is_integer(num) && fabs(num) <= NJS_MAX_SAFE_INTEGER;
}


uint64_t
njs_number_bits(double num)
{
    union njs_number_bits_u  u;

    u.number = num;

    return u.bits;
}


int
njs_value_is_true(const njs_value_t *value)
{
    switch (value->type) {
    case NJS_BOOLEAN:
    case NJS_NUMBER:
        return value->u.number != 0 && !isnan(value->u.number);

    case NJS_STRING:
        return value->u.str.length != 0;

    case NJS_OBJECT:
        return 1;

    default:
        return 0;
    }
}
